#include "hrf/prophet.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hrf::classical {
namespace {

double soft_threshold(double x, double lambda) {
    if (x > lambda) return x - lambda;
    if (x < -lambda) return x + lambda;
    return 0.0;
}

std::size_t capped_order(double period, std::size_t requested) {
    // Beyond floor((P-1)/2) harmonics alias onto lower ones at integer times.
    const auto cap = static_cast<std::size_t>(std::max(1.0, std::floor((period - 1.0) / 2.0)));
    return std::min(requested, cap);
}

}  // namespace

void validate(const ProphetConfig& cfg) {
    if (!(cfg.changepoint_prior_scale > 0.0)) throw ConfigError("changepoint_prior_scale must be positive");
    if (!(cfg.seasonality_prior_scale > 0.0)) throw ConfigError("seasonality_prior_scale must be positive");
    if (!cfg.seasonal_periods.empty() && cfg.fourier_order == 0) {
        throw ConfigError("fourier_order must be >= 1 when seasonal periods are configured");
    }
    for (double p : cfg.seasonal_periods) {
        if (!(p >= 2.0)) throw ConfigError("seasonal periods must be >= 2 samples");
    }
    if (!(cfg.changepoint_range > 0.0 && cfg.changepoint_range <= 1.0)) {
        throw ConfigError("changepoint_range must lie in (0, 1]");
    }
    if (cfg.max_sweeps == 0) throw ConfigError("max_sweeps must be positive");
}

double ProphetFit::trend(double t) const {
    double v = m + k * (t - t0);
    for (std::size_t j = 0; j < deltas.size(); ++j) v += deltas[j] * std::max(0.0, t - changepoints[j]);
    return v;
}

double ProphetFit::seasonality(double t) const {
    double v = 0.0;
    std::size_t idx = 0;
    for (std::size_t p = 0; p < periods.size(); ++p) {
        for (std::size_t n = 1; n <= orders[p]; ++n) {
            const double arg = 2.0 * std::numbers::pi * static_cast<double>(n) * t / periods[p];
            v += fourier_coeffs[idx] * std::sin(arg) + fourier_coeffs[idx + 1] * std::cos(arg);
            idx += 2;
        }
    }
    return v;
}

double ProphetFit::rate_at(double t) const {
    double r = k;
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        if (t >= changepoints[j]) r += deltas[j];
    }
    return r;
}

std::vector<double> place_changepoints(std::span<const double> t, std::size_t n_changepoints, double range) {
    const auto hist = static_cast<std::size_t>(std::floor(static_cast<double>(t.size()) * range));
    if (n_changepoints == 0 || hist < 2) return {};
    const std::size_t n_cp = std::min(n_changepoints, hist - 1);
    std::vector<double> out;
    for (std::size_t i = 1; i <= n_cp; ++i) {
        const double pos = static_cast<double>(i) * static_cast<double>(hist - 1) / static_cast<double>(n_cp);
        const auto idx = static_cast<std::size_t>(std::nearbyint(pos));
        if (out.empty() || t[idx] > out.back()) out.push_back(t[idx]);
    }
    return out;
}

ProphetFit prophet_fit(std::span<const double> t, std::span<const double> y, const ProphetConfig& cfg) {
    validate(cfg);
    if (t.size() != y.size()) throw DimensionError("prophet_fit: time and value arrays differ in length");
    const std::size_t n = y.size();
    if (n < 3) throw InsufficientDataError("prophet_fit needs at least 3 observations");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(t[i] > t[i - 1])) throw InputError("prophet_fit: times must be strictly increasing");
    }

    ProphetFit fit;
    fit.t0 = t.front();
    fit.changepoints = place_changepoints(t, cfg.n_changepoints, cfg.changepoint_range);
    std::size_t n_fourier = 0;
    for (double p : cfg.seasonal_periods) {
        fit.periods.push_back(p);
        fit.orders.push_back(capped_order(p, cfg.fourier_order));
        n_fourier += 2 * fit.orders.back();
    }
    if (n <= 2 * (fit.changepoints.size() + n_fourier)) {
        throw InsufficientDataError("prophet_fit needs more than " +
                                    std::to_string(2 * (fit.changepoints.size() + n_fourier)) +
                                    " observations for this configuration, got " + std::to_string(n));
    }

    const double span = t.back() - fit.t0;
    double y_scale = 0.0;
    for (double v : y) y_scale = std::max(y_scale, std::abs(v));
    if (!(y_scale > 0.0)) throw DegenerateError("prophet_fit: series is identically zero");

    // Columns: [1, t, fourier..., hinge...]
    const std::size_t px = 2 + n_fourier;
    const std::size_t pa = fit.changepoints.size();
    Eigen::MatrixXd Z(n, px + pa);
    Eigen::VectorXd ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ts = (t[i] - fit.t0) / span;
        ys(i) = y[i] / y_scale;
        Z(i, 0) = 1.0;
        Z(i, 1) = ts;
        std::size_t col = 2;
        for (std::size_t p = 0; p < fit.periods.size(); ++p) {
            for (std::size_t h = 1; h <= fit.orders[p]; ++h) {
                const double arg = 2.0 * std::numbers::pi * static_cast<double>(h) * t[i] / fit.periods[p];
                Z(i, col++) = std::sin(arg);
                Z(i, col++) = std::cos(arg);
            }
        }
        for (std::size_t j = 0; j < pa; ++j) {
            Z(i, px + j) = std::max(0.0, ts - (fit.changepoints[j] - fit.t0) / span);
        }
    }
    const Eigen::MatrixXd G = Z.transpose() * Z;
    const Eigen::VectorXd c = Z.transpose() * ys;
    const double yy = ys.squaredNorm();
    const double l1 = 1.0 / cfg.changepoint_prior_scale;
    const double l2 = 1.0 / (cfg.seasonality_prior_scale * cfg.seasonality_prior_scale);

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(px + pa);
    const double n_d = static_cast<double>(n);
    // Noise variance floor keeps the objective bounded on exact fits.
    const double sigma2_floor = 1e-12;
    double sigma2 = 1.0;
    auto rss_of = [&] { return std::max(0.0, yy - 2.0 * c.dot(theta) + theta.dot(G * theta)); };
    auto solve_x = [&] {
        // With sigma2 fixed the objective is sigma2^-1 times the ridge problem with penalty 2 sigma2 l2.
        Eigen::MatrixXd A = G.topLeftCorner(px, px);
        for (std::size_t i = 2; i < px; ++i) A(i, i) += 2.0 * l2 * sigma2;
        Eigen::VectorXd rhs = c.head(px);
        if (pa > 0) rhs -= G.topRightCorner(px, pa) * theta.tail(pa);
        const Eigen::LDLT<Eigen::MatrixXd> solver(A);
        if (solver.info() != Eigen::Success) throw FitFailure("prophet_fit: singular trend/seasonality design");
        theta.head(px) = solver.solve(rhs);
    };
    auto update_sigma = [&] { sigma2 = std::max(sigma2_floor, rss_of() / n_d); };
    auto objective = [&] {
        return 0.5 * rss_of() / sigma2 + 0.5 * n_d * std::log(sigma2) + l2 * theta.segment(2, px - 2).squaredNorm() +
               l1 * theta.tail(pa).lpNorm<1>();
    };

    // Active-set step with sigma2 held fixed: head for the exact minimizer over
    // (m, k, beta) and the nonzero deltas with their signs frozen, stopping at
    // the first delta that would cross zero, which then leaves the active set.
    // Each leg is a descent step on a convex quadratic.
    auto refine_active = [&] {
        for (std::size_t leg = 0; leg <= pa; ++leg) {
            std::vector<Eigen::Index> idx;
            for (std::size_t i = 0; i < px + pa; ++i) {
                if (i < px || theta(static_cast<Eigen::Index>(i)) != 0.0) idx.push_back(static_cast<Eigen::Index>(i));
            }
            if (idx.size() == px) return;
            const auto m = static_cast<Eigen::Index>(idx.size());
            Eigen::MatrixXd A(m, m);
            Eigen::VectorXd rhs(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                for (Eigen::Index b = 0; b < m; ++b) A(a, b) = G(idx[a], idx[b]);
                rhs(a) = c(idx[a]);
                if (idx[a] >= 2 && idx[a] < static_cast<Eigen::Index>(px)) A(a, a) += 2.0 * l2 * sigma2;
                if (idx[a] >= static_cast<Eigen::Index>(px)) rhs(a) -= l1 * sigma2 * (theta(idx[a]) > 0.0 ? 1.0 : -1.0);
            }
            const Eigen::LDLT<Eigen::MatrixXd> solver(A);
            if (solver.info() != Eigen::Success) return;
            const Eigen::VectorXd sol = solver.solve(rhs);
            if (!sol.allFinite()) return;
            double step = 1.0;
            Eigen::Index blocking = -1;
            for (Eigen::Index a = static_cast<Eigen::Index>(px); a < m; ++a) {
                const double cur = theta(idx[a]);
                if ((sol(a) > 0.0) != (cur > 0.0) || sol(a) == 0.0) {
                    const double cross = cur / (cur - sol(a));
                    if (cross < step) {
                        step = cross;
                        blocking = idx[a];
                    }
                }
            }
            for (Eigen::Index a = 0; a < m; ++a) theta(idx[a]) += step * (sol(a) - theta(idx[a]));
            if (blocking < 0) return;
            theta(blocking) = 0.0;
        }
    };

    solve_x();
    update_sigma();
    double f_prev = objective();
    bool converged = false;
    std::size_t sweep = 0;
    while (!converged && sweep < cfg.max_sweeps) {
        ++sweep;
        for (std::size_t j = px; j < px + pa; ++j) {
            const double gjj = G(j, j);
            if (!(gjj > 0.0)) {
                theta(j) = 0.0;
                continue;
            }
            const double g = c(j) - G.row(j).dot(theta) + gjj * theta(j);
            theta(j) = soft_threshold(g, l1 * sigma2) / gjj;
        }
        solve_x();
        refine_active();
        update_sigma();
        const double f = objective();
        if (std::abs(f_prev - f) <= cfg.tolerance) converged = true;
        f_prev = f;
    }
    fit.sweeps = sweep;
    fit.objective = f_prev;

    fit.m = theta(0) * y_scale;
    fit.k = theta(1) * y_scale / span;
    for (std::size_t i = 2; i < px; ++i) fit.fourier_coeffs.push_back(theta(static_cast<Eigen::Index>(i)) * y_scale);
    for (std::size_t j = 0; j < pa; ++j) fit.deltas.push_back(theta(static_cast<Eigen::Index>(px + j)) * y_scale / span);
    const Eigen::VectorXd resid = ys - Z * theta;
    fit.rss = resid.squaredNorm() * y_scale * y_scale;
    if (!converged) {
        throw ProphetFitFailure("prophet_fit did not converge within " + std::to_string(cfg.max_sweeps) + " sweeps",
                                fit);
    }
    return fit;
}

ProphetFit prophet_fit(std::span<const double> y, const ProphetConfig& cfg) {
    std::vector<double> t(y.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    return prophet_fit(t, y, cfg);
}

std::vector<double> prophet_forecast(const ProphetFit& fit, std::span<const double> t_future) {
    if (t_future.empty()) throw InputError("prophet_forecast needs at least one time point");
    std::vector<double> out(t_future.size());
    std::transform(t_future.begin(), t_future.end(), out.begin(), [&](double t) { return fit.predict(t); });
    return out;
}

std::string to_json(const ProphetFit& fit) {
    nlohmann::json j;
    j["t0"] = fit.t0;
    j["k"] = fit.k;
    j["m"] = fit.m;
    j["deltas"] = fit.deltas;
    j["changepoints"] = fit.changepoints;
    j["periods"] = fit.periods;
    j["orders"] = fit.orders;
    j["fourier_coeffs"] = fit.fourier_coeffs;
    j["sweeps"] = fit.sweeps;
    j["objective"] = fit.objective;
    j["rss"] = fit.rss;
    return j.dump(2);
}

ProphetFit prophet_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ProphetFit fit;
        fit.t0 = j.at("t0").get<double>();
        fit.k = j.at("k").get<double>();
        fit.m = j.at("m").get<double>();
        fit.deltas = j.at("deltas").get<std::vector<double>>();
        fit.changepoints = j.at("changepoints").get<std::vector<double>>();
        fit.periods = j.at("periods").get<std::vector<double>>();
        fit.orders = j.at("orders").get<std::vector<std::size_t>>();
        fit.fourier_coeffs = j.at("fourier_coeffs").get<std::vector<double>>();
        fit.sweeps = j.at("sweeps").get<std::size_t>();
        fit.objective = j.at("objective").get<double>();
        fit.rss = j.at("rss").get<double>();
        std::size_t terms = 0;
        for (std::size_t o : fit.orders) terms += 2 * o;
        if (fit.deltas.size() != fit.changepoints.size() || fit.orders.size() != fit.periods.size() ||
            fit.fourier_coeffs.size() != terms) {
            throw ConfigError("Prophet JSON arrays have inconsistent lengths");
        }
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed Prophet JSON: ") + e.what());
    }
}

}  // namespace hrf::classical
