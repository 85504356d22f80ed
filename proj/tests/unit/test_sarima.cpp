#include "doctest.h"

#include "hrf/errors.hpp"
#include "hrf/sarima.hpp"
#include "support/simulate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace hrf;
using namespace hrf::classical;

namespace {

// Smallest root modulus of 1 + c_1 z + ... + c_n z^n via the companion matrix.
double min_root_modulus(const std::vector<double>& poly) {
    std::size_t n = poly.size() - 1;
    while (n > 0 && poly[n] == 0.0) --n;
    if (n == 0) return std::numeric_limits<double>::infinity();
    // Roots of z^n p(1/z) are the reciprocals of the roots of p.
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) C(0, static_cast<Eigen::Index>(i)) = -poly[i + 1];
    for (std::size_t i = 1; i < n; ++i) C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    const Eigen::VectorXcd eig = C.eigenvalues();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < eig.size(); ++i) worst = std::max(worst, std::abs(eig(i)));
    return 1.0 / worst;
}

void check_invariants(const SarimaFit& fit) {
    CHECK(fit.aic == 2.0 * static_cast<double>(fit.n_params) - 2.0 * fit.loglik);
    CHECK(fit.ar.size() == static_cast<std::size_t>(fit.order.p));
    CHECK(fit.ma.size() == static_cast<std::size_t>(fit.order.q));
    CHECK(fit.seasonal_ar.size() == static_cast<std::size_t>(fit.order.P));
    CHECK(fit.seasonal_ma.size() == static_cast<std::size_t>(fit.order.Q));
    CHECK(min_root_modulus(fit.ar_polynomial()) > 1.0 + 1e-6);
    CHECK(min_root_modulus(fit.ma_polynomial()) > 1.0 + 1e-6);
}

}  // namespace

TEST_CASE("mean-only model is the sample mean and variance") {
    const auto y = testing::white_noise(400, 3, 5.0, 2.0);
    const auto fit = sarima_fit(y, SarimaOrder{});
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    CHECK(fit.intercept == doctest::Approx(mean).epsilon(1e-6));
    CHECK(fit.sigma2 == doctest::Approx(var).epsilon(1e-9));
    CHECK(fit.n_params == 2);
    check_invariants(fit);
}

TEST_CASE("AR(1) coefficient recovery") {
    const auto y = testing::simulate_ar1(0.7, 1500, 11);
    const auto fit = sarima_fit(y, SarimaOrder{1, 0, 0, 0, 0, 0, 0});
    CHECK(fit.ar[0] >= 0.6);
    CHECK(fit.ar[0] <= 0.8);
    CHECK(fit.sigma2 == doctest::Approx(1.0).epsilon(0.1));
    check_invariants(fit);
}

TEST_CASE("seasonal MA(1) coefficient recovery") {
    const auto y = testing::simulate_seasonal_ma(0.5, 12, 2000, 12);
    const auto fit = sarima_fit(y, SarimaOrder{0, 0, 0, 0, 0, 1, 12});
    CHECK(fit.seasonal_ma[0] >= 0.4);
    CHECK(fit.seasonal_ma[0] <= 0.6);
    check_invariants(fit);
}

TEST_CASE("fit over two segments") {
    const auto y = testing::simulate_ar1(0.7, 1500, 21);
    const std::span<const double> all(y);
    const auto fit = sarima_fit({all.subspan(0, 600), all.subspan(900)}, SarimaOrder{1, 0, 0, 0, 0, 0, 0});
    CHECK(std::abs(fit.ar[0] - 0.7) < 0.1);
    CHECK(fit.n_residuals == 600 - 1 + 600 - 1);
}

TEST_CASE("grid search prefers an AR structure on AR data and never loses to a member") {
    const auto y = testing::simulate_ar1(0.7, 800, 5);
    SarimaGrid grid;
    grid.p_max = 2;
    grid.q_max = 1;
    const auto best = sarima_grid_search(y, grid);
    const auto noise = sarima_fit(y, SarimaOrder{});
    CHECK(best.aic <= noise.aic);
    CHECK((best.order.p >= 1 || best.order.q >= 1));
    check_invariants(best);
    for (const auto& order : grid_orders(grid)) {
        const auto member = sarima_fit(y, order);
        CHECK(best.aic <= member.aic);
        check_invariants(member);
    }
    SarimaGrid single;
    single.p_max = 0;
    single.q_max = 0;
    const auto only = sarima_grid_search(y, single);
    CHECK(only.order == SarimaOrder{});
    CHECK(only.aic == noise.aic);
}

TEST_CASE("tie-break on equal AIC") {
    SarimaFit ar;
    ar.order = {1, 0, 0, 0, 0, 0, 0};
    ar.n_params = 3;
    ar.aic = 10.0;
    SarimaFit ma = ar;
    ma.order = {0, 0, 1, 0, 0, 0, 0};
    ma.aic = 10.0 + 5e-13;
    CHECK(better_fit(ma, ar));
    CHECK_FALSE(better_fit(ar, ma));
    SarimaFit bigger = ar;
    bigger.order = {0, 0, 0, 0, 0, 0, 0};
    bigger.n_params = 2;
    CHECK(better_fit(bigger, ma));
    ma.aic = 9.0;
    CHECK(better_fit(ma, bigger));
}

TEST_CASE("closed-form forecasts") {
    SarimaFit mean_only;
    mean_only.intercept = 3.25;
    mean_only.has_intercept = true;
    const std::vector<double> hist{1, 2, 3, 4, 5};
    CHECK(sarima_forecast(mean_only, hist, 4) == std::vector<double>(4, 3.25));

    SarimaFit ar1;
    ar1.order = {1, 0, 0, 0, 0, 0, 0};
    ar1.ar = {0.6};
    const auto f = sarima_forecast(ar1, hist, 5);
    for (std::size_t h = 0; h < 5; ++h) CHECK(f[h] == doctest::Approx(std::pow(0.6, double(h + 1)) * 5.0).epsilon(1e-14));

    SarimaFit rw;
    rw.order = {0, 1, 0, 0, 0, 0, 0};
    CHECK(sarima_forecast(rw, hist, 3) == std::vector<double>(3, 5.0));

    SarimaFit seasonal_rw;
    seasonal_rw.order = {0, 0, 0, 0, 1, 0, 3};
    const std::vector<double> cyc{1, 2, 3, 1.5, 2.5, 3.5};
    const auto sf = sarima_forecast(seasonal_rw, cyc, 6);
    CHECK(sf == std::vector<double>{1.5, 2.5, 3.5, 1.5, 2.5, 3.5});

    CHECK_THROWS_AS((void)sarima_forecast(ar1, hist, 0), InputError);
}

TEST_CASE("forecasting from an origin only uses the history before it") {
    const auto y = testing::simulate_ar1(0.5, 600, 8, 3.0);
    const auto fit = sarima_fit(y, SarimaOrder{1, 0, 1, 0, 0, 0, 0});
    const SarimaForecaster full(fit, y);
    for (std::size_t origin : {50u, 311u, 600u}) {
        const std::span<const double> prefix(y.data(), origin);
        const auto a = full.forecast(origin, 7);
        const auto b = sarima_forecast(fit, prefix, 7);
        for (std::size_t h = 0; h < 7; ++h) CHECK(a[h] == doctest::Approx(b[h]).epsilon(1e-12));
    }
}

TEST_CASE("seasonal period detection") {
    std::vector<double> sine(200);
    for (std::size_t t = 0; t < sine.size(); ++t) sine[t] = std::sin(2.0 * std::numbers::pi * double(t) / 24.0);
    CHECK(detect_seasonal_period(sine, 50) == 24);
    CHECK(detect_seasonal_period(testing::white_noise(500, 9), 50) == 0);
    CHECK_THROWS_AS((void)detect_seasonal_period(std::vector<double>(300, 72.0), 50), DegenerateError);
    CHECK_THROWS_AS((void)detect_seasonal_period(sine, 60), InsufficientDataError);
}

TEST_CASE("differencing heuristic") {
    std::vector<double> trend(400);
    for (std::size_t t = 0; t < trend.size(); ++t) trend[t] = 0.5 * double(t) + std::sin(double(t));
    CHECK(choose_differencing(trend, 20).d == 1);
    const auto ar = testing::simulate_ar1(0.7, 800, 4);
    const auto c = choose_differencing(ar, 20);
    CHECK(c.d == 0);
    CHECK(c.D == 0);
}

TEST_CASE("optimizer budget exhaustion carries the best point") {
    const auto y = testing::simulate_ar1(0.7, 500, 6);
    SarimaFitOptions tight;
    tight.max_iterations = 3;
    try {
        (void)sarima_fit(y, SarimaOrder{2, 0, 2, 0, 0, 0, 0}, tight);
        FAIL("expected a fit failure");
    } catch (const SarimaFitFailure& e) {
        CHECK(e.best().ar.size() == 2);
        CHECK(std::isfinite(e.best().aic));
    }
    CHECK_THROWS_AS((void)sarima_fit(std::vector<double>(11, 1.0), SarimaOrder{1, 0, 0, 0, 0, 0, 0}),
                    InsufficientDataError);
    CHECK_THROWS_AS(validate(SarimaOrder{0, 2, 0, 0, 1, 0, 12}), ConfigError);
    CHECK_THROWS_AS(validate(SarimaOrder{0, 0, 0, 1, 0, 0, 1}), ConfigError);
}

TEST_CASE("JSON round trip") {
    const auto y = testing::simulate_seasonal_ma(0.5, 4, 300, 2);
    const auto fit = sarima_fit(y, SarimaOrder{1, 0, 0, 0, 0, 1, 4});
    const auto back = sarima_from_json(to_json(fit));
    CHECK(back.order == fit.order);
    CHECK(back.ar == fit.ar);
    CHECK(back.seasonal_ma == fit.seasonal_ma);
    CHECK(back.intercept == fit.intercept);
    CHECK(back.aic == fit.aic);
    CHECK(sarima_forecast(back, y, 5) == sarima_forecast(fit, y, 5));
    CHECK_THROWS_AS((void)sarima_from_json("{\"order\": 3}"), ConfigError);
}
