#pragma once

#include "hrf/errors.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrf::classical {

/// (p,d,q)(P,D,Q)_S. S only matters when a seasonal order is non-zero.
struct SarimaOrder {
    int p = 0, d = 0, q = 0;
    int P = 0, D = 0, Q = 0;
    int S = 0;

    [[nodiscard]] bool seasonal() const noexcept { return P > 0 || D > 0 || Q > 0; }
    [[nodiscard]] int n_coefficients() const noexcept { return p + q + P + Q; }
    /// Degree of (1-B)^d (1-B^S)^D.
    [[nodiscard]] int diff_degree() const noexcept { return d + D * S; }
    [[nodiscard]] std::string str() const;
    friend bool operator==(const SarimaOrder&, const SarimaOrder&) = default;
};

/// Throws ConfigError for negative orders, d + D > 2 or a seasonal part with S < 2.
void validate(const SarimaOrder& order);

struct SarimaFit {
    SarimaOrder order;
    std::vector<double> ar;           // phi_1..phi_p in (1 - sum phi_i B^i)
    std::vector<double> ma;           // theta_1..theta_q in (1 + sum theta_j B^j)
    std::vector<double> seasonal_ar;  // Phi_1..Phi_P
    std::vector<double> seasonal_ma;  // Theta_1..Theta_Q
    double intercept = 0.0;           // mean of the differenced series
    bool has_intercept = false;       // estimated only when d + D == 0
    double sigma2 = 0.0;
    double loglik = 0.0;
    double aic = 0.0;
    std::size_t n_params = 0;   // coefficients + intercept + sigma2
    std::size_t n_residuals = 0;

    /// Expanded AR lag polynomial, a[0] == 1.
    [[nodiscard]] std::vector<double> ar_polynomial() const;
    /// Expanded MA lag polynomial, b[0] == 1.
    [[nodiscard]] std::vector<double> ma_polynomial() const;
};

/// Thrown when the optimizer exhausts its budget. Carries the best point reached.
class SarimaFitFailure : public FitFailure {
  public:
    SarimaFitFailure(const std::string& what, SarimaFit best) : FitFailure(what), best_(std::move(best)) {}
    [[nodiscard]] const SarimaFit& best() const noexcept { return best_; }

  private:
    SarimaFit best_;
};

struct SarimaFitOptions {
    std::size_t max_iterations = 4000;  // per Nelder-Mead run
    double simplex_tolerance = 1e-7;
};

/**
 * Conditional-sum-of-squares fit.
 *
 * Coefficients are optimized by Nelder-Mead over unconstrained values mapped
 * through tanh to partial autocorrelations and then to polynomial
 * coefficients, so every returned AR polynomial is stationary and every MA
 * polynomial invertible. The intercept is profiled out in closed form.
 */
[[nodiscard]] SarimaFit sarima_fit(std::span<const double> y, const SarimaOrder& order,
                                   const SarimaFitOptions& options = {});
/// Same likelihood summed over disjoint segments of one series (e.g. the two sides of a held-out block).
[[nodiscard]] SarimaFit sarima_fit(const std::vector<std::span<const double>>& segments, const SarimaOrder& order,
                                   const SarimaFitOptions& options = {});

struct SarimaGrid {
    int p_max = 3, q_max = 3, P_max = 1, Q_max = 1;
    int d = 0, D = 0, S = 0;
};

/// Minimum-AIC fit over the grid. Ties within 1e-12 go to fewer parameters, then to the smaller (p,d,q,P,D,Q).
[[nodiscard]] SarimaFit sarima_grid_search(const std::vector<std::span<const double>>& segments,
                                           const SarimaGrid& grid, const SarimaFitOptions& options = {});
[[nodiscard]] SarimaFit sarima_grid_search(std::span<const double> y, const SarimaGrid& grid,
                                           const SarimaFitOptions& options = {});
/// All orders visited by the grid, in evaluation order.
[[nodiscard]] std::vector<SarimaOrder> grid_orders(const SarimaGrid& grid);
/// True when `a` is preferred over `b` under the AIC-then-tie-break rule.
[[nodiscard]] bool better_fit(const SarimaFit& a, const SarimaFit& b);

/**
 * Forecasts from any origin of a fixed history.
 *
 * Residuals are computed once over the whole history; they are causal, so
 * forecasting from origin o uses only history[0, o).
 */
class SarimaForecaster {
  public:
    SarimaForecaster(SarimaFit fit, std::span<const double> history);
    /// Forecast of history[origin, origin + horizon). Requires origin > diff degree.
    [[nodiscard]] std::vector<double> forecast(std::size_t origin, std::size_t horizon) const;
    [[nodiscard]] const SarimaFit& fit() const noexcept { return fit_; }

  private:
    SarimaFit fit_;
    std::vector<double> y_;
    std::vector<double> w_;  // differenced history, aligned with y_ (zero before diff degree)
    std::vector<double> e_;  // residuals, zero where undefined
    std::vector<double> a_, b_, delta_;
};

/// Forecast of the H values following y.
[[nodiscard]] std::vector<double> sarima_forecast(const SarimaFit& fit, std::span<const double> y, std::size_t horizon);

/// Sample autocorrelations for lags 0..max_lag. Throws DegenerateError for a constant series.
[[nodiscard]] std::vector<double> autocorrelation(std::span<const double> y, std::size_t max_lag);

/**
 * Lag in [2, max_period] at the highest local peak of the ACF, or 0 when that
 * peak does not exceed 2/sqrt(n).
 */
[[nodiscard]] int detect_seasonal_period(std::span<const double> y, int max_period);

/// Applies (1-B)^d (1-B^S)^D. The result is shorter by the differencing degree.
[[nodiscard]] std::vector<double> difference(std::span<const double> y, int d, int D, int S);

struct DifferencingChoice {
    int d = 0;
    int D = 0;
    int S = 0;
};

/**
 * Unit-root-free heuristic. Difference while the ACF stays above 0.5 over the
 * first 10 lags with lag-1 above 0.9; then detect S on the result and apply one
 * seasonal difference if the ACF at lag S exceeds 0.9.
 */
[[nodiscard]] DifferencingChoice choose_differencing(std::span<const double> y, int max_period);

struct AutoSarimaOptions {
    int max_period = 50;
    SarimaGrid bounds;  // d, D and S are filled in by the heuristic
    SarimaFitOptions fit;
};

/// Heuristic d, D, S on the longest segment, then grid search over all segments.
[[nodiscard]] SarimaFit auto_sarima(const std::vector<std::span<const double>>& segments,
                                    const AutoSarimaOptions& options = {});

[[nodiscard]] std::string to_json(const SarimaFit& fit);
[[nodiscard]] SarimaFit sarima_from_json(std::string_view text);

}  // namespace hrf::classical
