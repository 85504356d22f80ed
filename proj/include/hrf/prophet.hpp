#pragma once

#include "hrf/errors.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrf::classical {

struct ProphetConfig {
    std::size_t n_changepoints = 25;
    double changepoint_prior_scale = 0.05;
    double seasonality_prior_scale = 10.0;
    std::size_t fourier_order = 10;
    std::vector<double> seasonal_periods;  // in samples
    double changepoint_range = 0.8;
    std::size_t max_sweeps = 10000;
    double tolerance = 1e-8;
};

/// Throws ConfigError on non-positive prior scales, zero Fourier order with periods, or periods < 2.
void validate(const ProphetConfig& cfg);

/**
 * Piecewise-linear trend plus Fourier seasonality, in the units of the data
 * it was fitted on (time in sample indices).
 *
 *   trend(t) = m + k (t - t0) + sum_j delta_j max(0, t - s_j)
 */
struct ProphetFit {
    double t0 = 0.0;
    double k = 0.0;
    double m = 0.0;
    std::vector<double> deltas;
    std::vector<double> changepoints;  // strictly increasing
    std::vector<double> periods;
    std::vector<std::size_t> orders;    // Fourier order used for each period
    std::vector<double> fourier_coeffs; // per period, per order: sin then cos
    std::size_t sweeps = 0;
    double objective = 0.0;  // penalized objective at the solution, internal scale
    double rss = 0.0;        // residual sum of squares in data units

    [[nodiscard]] double trend(double t) const;
    [[nodiscard]] double seasonality(double t) const;
    [[nodiscard]] double predict(double t) const { return trend(t) + seasonality(t); }
    /// Slope of the trend just after time t.
    [[nodiscard]] double rate_at(double t) const;
};

class ProphetFitFailure : public FitFailure {
  public:
    ProphetFitFailure(const std::string& what, ProphetFit best) : FitFailure(what), best_(std::move(best)) {}
    [[nodiscard]] const ProphetFit& best() const noexcept { return best_; }

  private:
    ProphetFit best_;
};

/// Changepoint times for strictly increasing `t`: evenly spaced positions over the first `range` of the points.
[[nodiscard]] std::vector<double> place_changepoints(std::span<const double> t, std::size_t n_changepoints,
                                                     double range = 0.8);

/**
 * Penalized least squares
 *
 *   1/2 RSS + (1/cps) sum |delta| + (1/sps^2) sum beta^2
 *
 * evaluated with time mapped onto [0, 1] over the training span and values
 * divided by max |y|. Alternates an exact solve for (m, k, beta) with a cyclic
 * soft-threshold sweep over the deltas until the objective changes by at most
 * `tolerance`.
 */
[[nodiscard]] ProphetFit prophet_fit(std::span<const double> t, std::span<const double> y, const ProphetConfig& cfg);
/// Times 0..n-1.
[[nodiscard]] ProphetFit prophet_fit(std::span<const double> y, const ProphetConfig& cfg);

[[nodiscard]] std::vector<double> prophet_forecast(const ProphetFit& fit, std::span<const double> t_future);

[[nodiscard]] std::string to_json(const ProphetFit& fit);
[[nodiscard]] ProphetFit prophet_from_json(std::string_view text);

}  // namespace hrf::classical
