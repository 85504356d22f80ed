#include "hrf/sarima.hpp"

#include "json.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <tuple>

namespace hrf::classical {
namespace {

constexpr double kPacfBound = 0.999;

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

// 1 + sign * sum c_i B^(i*lag)
std::vector<double> lag_poly(const std::vector<double>& coeffs, int lag, double sign) {
    std::vector<double> out(coeffs.size() * static_cast<std::size_t>(lag) + 1, 0.0);
    out[0] = 1.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) out[(i + 1) * static_cast<std::size_t>(lag)] = sign * coeffs[i];
    return out;
}

std::vector<double> diff_poly(int d, int D, int S) {
    std::vector<double> out{1.0};
    for (int i = 0; i < d; ++i) out = poly_mul(out, {1.0, -1.0});
    for (int i = 0; i < D; ++i) {
        std::vector<double> seasonal(static_cast<std::size_t>(S) + 1, 0.0);
        seasonal[0] = 1.0;
        seasonal[static_cast<std::size_t>(S)] = -1.0;
        out = poly_mul(out, seasonal);
    }
    return out;
}

// Partial autocorrelations to coefficients of 1 - sum phi_i B^i.
std::vector<double> durbin_levinson(const std::vector<double>& r) {
    std::vector<double> phi;
    for (std::size_t k = 0; k < r.size(); ++k) {
        std::vector<double> next(k + 1);
        for (std::size_t j = 0; j < k; ++j) next[j] = phi[j] - r[k] * phi[k - 1 - j];
        next[k] = r[k];
        phi = std::move(next);
    }
    return phi;
}

std::vector<double> constrained(const double* u, int n) {
    std::vector<double> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = kPacfBound * std::tanh(u[i]);
    return durbin_levinson(r);
}

struct Coefficients {
    std::vector<double> ar, ma, sar, sma;
};

Coefficients unpack(const SarimaOrder& o, const double* u) {
    Coefficients c;
    c.ar = constrained(u, o.p);
    u += o.p;
    // MA polynomials use the same stable map with the sign flipped, 1 + theta B == 1 - phi B.
    c.ma = constrained(u, o.q);
    for (double& v : c.ma) v = -v;
    u += o.q;
    c.sar = constrained(u, o.P);
    u += o.P;
    c.sma = constrained(u, o.Q);
    for (double& v : c.sma) v = -v;
    return c;
}

struct Residuals {
    double ssr = 0.0;
    std::size_t n = 0;
    double intercept = 0.0;
};

// CSS residual sums for fixed polynomials over differenced segments. When
// `with_intercept`, the filter is affine in mu and mu is solved in closed form.
Residuals css(const std::vector<std::vector<double>>& w_segments, const std::vector<double>& a,
              const std::vector<double>& b, bool with_intercept) {
    const std::size_t pa = a.size() - 1;
    const std::size_t qb = b.size() - 1;
    double rr = 0.0, rc = 0.0, cc = 0.0;
    std::size_t n = 0;
    std::vector<double> r, c;
    for (const auto& w : w_segments) {
        if (w.size() <= pa) continue;
        r.assign(w.size(), 0.0);
        c.assign(w.size(), 0.0);
        for (std::size_t t = pa; t < w.size(); ++t) {
            double rt = 0.0, ct = 0.0;
            for (std::size_t i = 0; i <= pa; ++i) {
                if (a[i] == 0.0) continue;
                rt += a[i] * w[t - i];
                ct += a[i];
            }
            for (std::size_t j = 1; j <= qb && j <= t; ++j) {
                if (b[j] == 0.0) continue;
                rt -= b[j] * r[t - j];
                ct -= b[j] * c[t - j];
            }
            r[t] = rt;
            c[t] = ct;
            rr += rt * rt;
            rc += rt * ct;
            cc += ct * ct;
            ++n;
        }
    }
    Residuals out;
    out.n = n;
    if (with_intercept && cc > 0.0) {
        out.intercept = rc / cc;
        out.ssr = std::max(0.0, rr - rc * rc / cc);
    } else {
        out.ssr = rr;
    }
    return out;
}

struct Problem {
    const SarimaOrder* order;
    const std::vector<std::vector<double>>* w;
    bool with_intercept;
};

std::pair<std::vector<double>, std::vector<double>> polys(const SarimaOrder& o, const Coefficients& c) {
    auto a = poly_mul(lag_poly(c.ar, 1, -1.0), lag_poly(c.sar, std::max(o.S, 1), -1.0));
    auto b = poly_mul(lag_poly(c.ma, 1, 1.0), lag_poly(c.sma, std::max(o.S, 1), 1.0));
    return {std::move(a), std::move(b)};
}

double objective(const Problem& pr, const double* u) {
    const auto c = unpack(*pr.order, u);
    const auto [a, b] = polys(*pr.order, c);
    const auto res = css(*pr.w, a, b, pr.with_intercept);
    if (res.n == 0) return std::numeric_limits<double>::infinity();
    const double s2 = res.ssr / static_cast<double>(res.n);
    if (!(s2 > 0.0)) return -1e300;
    return 0.5 * static_cast<double>(res.n) * std::log(s2);
}

double gsl_objective(const gsl_vector* x, void* params) {
    const auto* pr = static_cast<const Problem*>(params);
    const double v = objective(*pr, x->data);
    return std::isfinite(v) ? v : 1e300;
}

SarimaFit assemble(const SarimaOrder& o, const std::vector<std::vector<double>>& w, bool with_intercept,
                   const std::vector<double>& u) {
    SarimaFit fit;
    fit.order = o;
    const auto c = unpack(o, u.data());
    fit.ar = c.ar;
    fit.ma = c.ma;
    fit.seasonal_ar = c.sar;
    fit.seasonal_ma = c.sma;
    const auto [a, b] = polys(o, c);
    const auto res = css(w, a, b, with_intercept);
    fit.has_intercept = with_intercept;
    fit.intercept = with_intercept ? res.intercept : 0.0;
    fit.n_residuals = res.n;
    fit.sigma2 = res.n > 0 ? res.ssr / static_cast<double>(res.n) : 0.0;
    const double n = static_cast<double>(res.n);
    fit.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * fit.sigma2) + 1.0);
    fit.n_params = static_cast<std::size_t>(o.n_coefficients()) + (with_intercept ? 1 : 0) + 1;
    fit.aic = 2.0 * static_cast<double>(fit.n_params) - 2.0 * fit.loglik;
    return fit;
}

// Returns true when the simplex collapsed below tolerance.
bool nelder_mead(const Problem& pr, std::vector<double>& x, double step, const SarimaFitOptions& opt) {
    const std::size_t dim = x.size();
    gsl_multimin_function fn{&gsl_objective, dim, const_cast<Problem*>(&pr)};
    gsl_vector* start = gsl_vector_alloc(dim);
    gsl_vector* steps = gsl_vector_alloc(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        gsl_vector_set(start, i, x[i]);
        gsl_vector_set(steps, i, step);
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
    gsl_multimin_fminimizer_set(s, &fn, start, steps);
    bool converged = false;
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
        if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.simplex_tolerance) == GSL_SUCCESS) {
            converged = true;
            break;
        }
    }
    for (std::size_t i = 0; i < dim; ++i) x[i] = gsl_vector_get(s->x, i);
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(steps);
    gsl_vector_free(start);
    return converged;
}

std::size_t min_length(const SarimaOrder& o) {
    const int reach = std::max({o.p, o.q, o.P * o.S, o.Q * o.S});
    return static_cast<std::size_t>(o.diff_degree() + reach + 10);
}

struct GslQuiet {
    gsl_error_handler_t* previous = gsl_set_error_handler_off();
    ~GslQuiet() { gsl_set_error_handler(previous); }
};

}  // namespace

std::string SarimaOrder::str() const {
    std::ostringstream os;
    os << '(' << p << ',' << d << ',' << q << ")(" << P << ',' << D << ',' << Q << ")_" << S;
    return os.str();
}

void validate(const SarimaOrder& o) {
    if (o.p < 0 || o.d < 0 || o.q < 0 || o.P < 0 || o.D < 0 || o.Q < 0 || o.S < 0) {
        throw ConfigError("SARIMA orders must be non-negative: " + o.str());
    }
    if (o.d + o.D > 2) throw ConfigError("SARIMA differencing d + D must be <= 2: " + o.str());
    if (o.seasonal() && o.S < 2) throw ConfigError("seasonal SARIMA terms need a period S >= 2: " + o.str());
}

std::vector<double> SarimaFit::ar_polynomial() const {
    return poly_mul(lag_poly(ar, 1, -1.0), lag_poly(seasonal_ar, std::max(order.S, 1), -1.0));
}

std::vector<double> SarimaFit::ma_polynomial() const {
    return poly_mul(lag_poly(ma, 1, 1.0), lag_poly(seasonal_ma, std::max(order.S, 1), 1.0));
}

std::vector<double> difference(std::span<const double> y, int d, int D, int S) {
    const auto poly = diff_poly(d, D, S);
    const std::size_t deg = poly.size() - 1;
    if (y.size() <= deg) return {};
    std::vector<double> w(y.size() - deg);
    for (std::size_t t = deg; t < y.size(); ++t) {
        double v = 0.0;
        for (std::size_t i = 0; i <= deg; ++i) v += poly[i] * y[t - i];
        w[t - deg] = v;
    }
    return w;
}

SarimaFit sarima_fit(const std::vector<std::span<const double>>& segments, const SarimaOrder& order,
                     const SarimaFitOptions& options) {
    validate(order);
    std::size_t longest = 0;
    for (const auto& s : segments) longest = std::max(longest, s.size());
    if (longest <= min_length(order)) {
        throw InsufficientDataError("SARIMA " + order.str() + " needs more than " +
                                    std::to_string(min_length(order)) + " observations in a segment, got " +
                                    std::to_string(longest));
    }
    std::vector<std::vector<double>> w;
    for (const auto& s : segments) w.push_back(difference(s, order.d, order.D, order.S));
    const bool with_intercept = order.d + order.D == 0;
    const Problem pr{&order, &w, with_intercept};

    std::vector<double> u(static_cast<std::size_t>(order.n_coefficients()), 0.0);
    if (u.empty()) return assemble(order, w, with_intercept, u);

    GslQuiet quiet;
    nelder_mead(pr, u, 0.3, options);
    const bool converged = nelder_mead(pr, u, 0.1, options);
    SarimaFit fit = assemble(order, w, with_intercept, u);
    if (!converged || !std::isfinite(fit.aic)) {
        throw SarimaFitFailure("SARIMA " + order.str() + " did not converge within " +
                                   std::to_string(options.max_iterations) + " iterations",
                               fit);
    }
    return fit;
}

SarimaFit sarima_fit(std::span<const double> y, const SarimaOrder& order, const SarimaFitOptions& options) {
    return sarima_fit(std::vector<std::span<const double>>{y}, order, options);
}

std::vector<SarimaOrder> grid_orders(const SarimaGrid& g) {
    const bool seasonal_ok = g.S >= 2;
    std::vector<SarimaOrder> out;
    for (int p = 0; p <= g.p_max; ++p) {
        for (int q = 0; q <= g.q_max; ++q) {
            for (int P = 0; P <= (seasonal_ok ? g.P_max : 0); ++P) {
                for (int Q = 0; Q <= (seasonal_ok ? g.Q_max : 0); ++Q) {
                    out.push_back({p, g.d, q, P, g.D, Q, g.S});
                }
            }
        }
    }
    return out;
}

bool better_fit(const SarimaFit& a, const SarimaFit& b) {
    if (std::abs(a.aic - b.aic) > 1e-12) return a.aic < b.aic;
    if (a.n_params != b.n_params) return a.n_params < b.n_params;
    const auto& x = a.order;
    const auto& y = b.order;
    return std::tie(x.p, x.d, x.q, x.P, x.D, x.Q) < std::tie(y.p, y.d, y.q, y.P, y.D, y.Q);
}

SarimaFit sarima_grid_search(const std::vector<std::span<const double>>& segments, const SarimaGrid& grid,
                             const SarimaFitOptions& options) {
    std::optional<SarimaFit> best;
    std::string failures;
    for (const auto& order : grid_orders(grid)) {
        try {
            SarimaFit fit = sarima_fit(segments, order, options);
            if (!best || better_fit(fit, *best)) best = std::move(fit);
        } catch (const FitFailure& e) {
            failures += std::string("\n  ") + e.what();
        } catch (const InsufficientDataError& e) {
            failures += std::string("\n  ") + e.what();
        }
    }
    if (!best) throw FitFailure("every SARIMA order in the grid failed:" + failures);
    return *best;
}

SarimaFit sarima_grid_search(std::span<const double> y, const SarimaGrid& grid, const SarimaFitOptions& options) {
    return sarima_grid_search(std::vector<std::span<const double>>{y}, grid, options);
}

SarimaForecaster::SarimaForecaster(SarimaFit fit, std::span<const double> history)
    : fit_(std::move(fit)), y_(history.begin(), history.end()) {
    a_ = fit_.ar_polynomial();
    b_ = fit_.ma_polynomial();
    delta_ = diff_poly(fit_.order.d, fit_.order.D, fit_.order.S);
    const std::size_t dd = delta_.size() - 1;
    const std::size_t pa = a_.size() - 1;
    const double mu = fit_.intercept;
    w_.assign(y_.size(), 0.0);
    e_.assign(y_.size(), 0.0);
    for (std::size_t t = dd; t < y_.size(); ++t) {
        double v = 0.0;
        for (std::size_t i = 0; i <= dd; ++i) v += delta_[i] * y_[t - i];
        w_[t] = v;
    }
    for (std::size_t t = dd + pa; t < y_.size(); ++t) {
        double e = 0.0;
        for (std::size_t i = 0; i < a_.size(); ++i) e += a_[i] * (w_[t - i] - mu);
        for (std::size_t j = 1; j < b_.size() && j <= t; ++j) e -= b_[j] * e_[t - j];
        e_[t] = e;
    }
}

std::vector<double> SarimaForecaster::forecast(std::size_t origin, std::size_t horizon) const {
    if (horizon == 0) throw InputError("forecast horizon must be positive");
    const std::size_t dd = delta_.size() - 1;
    if (origin <= dd || origin > y_.size()) {
        throw InputError("forecast origin " + std::to_string(origin) + " outside usable history (" +
                         std::to_string(dd + 1) + ".." + std::to_string(y_.size()) + ")");
    }
    const double mu = fit_.intercept;
    // Working copies extended over the horizon; positions >= origin are forecasts.
    std::vector<double> y(y_.begin(), y_.begin() + static_cast<std::ptrdiff_t>(origin));
    std::vector<double> w(w_.begin(), w_.begin() + static_cast<std::ptrdiff_t>(origin));
    std::vector<double> out(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t t = origin + h;
        double x = 0.0;  // forecast of w_t - mu
        for (std::size_t i = 1; i < a_.size(); ++i) {
            if (a_[i] == 0.0 || i > t) continue;
            const std::size_t s = t - i;
            const double xs = s < dd ? 0.0 : w[s] - mu;
            x -= a_[i] * xs;
        }
        for (std::size_t j = 1; j < b_.size(); ++j) {
            if (b_[j] == 0.0 || j > t) continue;
            const std::size_t s = t - j;
            if (s < origin) x += b_[j] * e_[s];
        }
        const double wt = x + mu;
        double yt = wt;
        for (std::size_t i = 1; i <= dd; ++i) yt -= delta_[i] * y[t - i];
        w.push_back(wt);
        y.push_back(yt);
        out[h] = yt;
    }
    return out;
}

std::vector<double> sarima_forecast(const SarimaFit& fit, std::span<const double> y, std::size_t horizon) {
    return SarimaForecaster(fit, y).forecast(y.size(), horizon);
}

std::vector<double> autocorrelation(std::span<const double> y, std::size_t max_lag) {
    const std::size_t n = y.size();
    if (n < 2) throw InsufficientDataError("autocorrelation needs at least 2 observations");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double v : y) c0 += (v - mean) * (v - mean);
    if (!(c0 > 1e-300) || c0 <= 1e-24 * static_cast<double>(n) * std::max(1.0, mean * mean)) {
        throw DegenerateError("autocorrelation of a constant series");
    }
    std::vector<double> acf(max_lag + 1, 0.0);
    for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
        double ck = 0.0;
        for (std::size_t t = k; t < n; ++t) ck += (y[t] - mean) * (y[t - k] - mean);
        acf[k] = ck / c0;
    }
    return acf;
}

int detect_seasonal_period(std::span<const double> y, int max_period) {
    if (max_period < 2) throw InputError("max_period must be >= 2");
    if (y.size() < 4 * static_cast<std::size_t>(max_period)) {
        throw InsufficientDataError("seasonal detection up to lag " + std::to_string(max_period) + " needs " +
                                    std::to_string(4 * max_period) + " observations, got " +
                                    std::to_string(y.size()));
    }
    const auto acf = autocorrelation(y, static_cast<std::size_t>(max_period) + 1);
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int k = 2; k <= max_period; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const bool peak = acf[ku] > acf[ku - 1] && acf[ku] >= acf[ku + 1];
        if (peak && acf[ku] > best_value) {
            best_value = acf[ku];
            best = k;
        }
    }
    const double threshold = 2.0 / std::sqrt(static_cast<double>(y.size()));
    return best != 0 && best_value > threshold ? best : 0;
}

DifferencingChoice choose_differencing(std::span<const double> y, int max_period) {
    auto trending = [](std::span<const double> s) {
        if (s.size() < 40) return false;
        const auto acf = autocorrelation(s, 10);
        if (acf[1] <= 0.9) return false;
        return std::all_of(acf.begin() + 1, acf.end(), [](double r) { return r > 0.5; });
    };
    DifferencingChoice choice;
    std::vector<double> work(y.begin(), y.end());
    while (choice.d < 2 && trending(work)) {
        work = difference(work, 1, 0, 0);
        ++choice.d;
    }
    const int cap = std::min(max_period, static_cast<int>(work.size() / 4));
    if (cap >= 2) {
        try {
            choice.S = detect_seasonal_period(work, cap);
        } catch (const DegenerateError&) {
            choice.S = 0;
        }
    }
    if (choice.S >= 2 && choice.d < 2 && work.size() > static_cast<std::size_t>(choice.S) + 2) {
        const auto acf = autocorrelation(work, static_cast<std::size_t>(choice.S));
        if (acf[static_cast<std::size_t>(choice.S)] > 0.9) choice.D = 1;
    }
    return choice;
}

SarimaFit auto_sarima(const std::vector<std::span<const double>>& segments, const AutoSarimaOptions& options) {
    if (segments.empty()) throw InsufficientDataError("no data to fit");
    const auto longest = *std::max_element(segments.begin(), segments.end(),
                                           [](auto a, auto b) { return a.size() < b.size(); });
    const auto choice = choose_differencing(longest, options.max_period);
    SarimaGrid grid = options.bounds;
    grid.d = choice.d;
    grid.D = choice.D;
    grid.S = choice.S;
    return sarima_grid_search(segments, grid, options.fit);
}

std::string to_json(const SarimaFit& fit) {
    const auto& o = fit.order;
    nlohmann::json j;
    j["order"] = {{"p", o.p}, {"d", o.d}, {"q", o.q}, {"P", o.P}, {"D", o.D}, {"Q", o.Q}, {"S", o.S}};
    j["ar"] = fit.ar;
    j["ma"] = fit.ma;
    j["seasonal_ar"] = fit.seasonal_ar;
    j["seasonal_ma"] = fit.seasonal_ma;
    j["intercept"] = fit.intercept;
    j["has_intercept"] = fit.has_intercept;
    j["sigma2"] = fit.sigma2;
    j["loglik"] = fit.loglik;
    j["aic"] = fit.aic;
    j["n_params"] = fit.n_params;
    j["n_residuals"] = fit.n_residuals;
    return j.dump(2);
}

SarimaFit sarima_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        SarimaFit fit;
        const auto& o = j.at("order");
        fit.order = {o.at("p").get<int>(), o.at("d").get<int>(), o.at("q").get<int>(), o.at("P").get<int>(),
                     o.at("D").get<int>(), o.at("Q").get<int>(), o.at("S").get<int>()};
        validate(fit.order);
        fit.ar = j.at("ar").get<std::vector<double>>();
        fit.ma = j.at("ma").get<std::vector<double>>();
        fit.seasonal_ar = j.at("seasonal_ar").get<std::vector<double>>();
        fit.seasonal_ma = j.at("seasonal_ma").get<std::vector<double>>();
        fit.intercept = j.at("intercept").get<double>();
        fit.has_intercept = j.at("has_intercept").get<bool>();
        fit.sigma2 = j.at("sigma2").get<double>();
        fit.loglik = j.at("loglik").get<double>();
        fit.aic = j.at("aic").get<double>();
        fit.n_params = j.at("n_params").get<std::size_t>();
        fit.n_residuals = j.at("n_residuals").get<std::size_t>();
        if (fit.ar.size() != static_cast<std::size_t>(fit.order.p) ||
            fit.ma.size() != static_cast<std::size_t>(fit.order.q) ||
            fit.seasonal_ar.size() != static_cast<std::size_t>(fit.order.P) ||
            fit.seasonal_ma.size() != static_cast<std::size_t>(fit.order.Q)) {
            throw ConfigError("SARIMA coefficient counts do not match the order");
        }
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed SARIMA JSON: ") + e.what());
    }
}

}  // namespace hrf::classical
