#pragma once

#include "hrf/dataset.hpp"
#include "hrf/prophet.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hrf::plot {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Line plot of bpm against seconds (index * interval). Throws InputError on an empty series.
[[nodiscard]] std::string series_svg(const data::TimeSeries& series);

/// Trend sampled at every integer time in [0, n) plus every changepoint, in time order.
[[nodiscard]] std::vector<Point> trend_polyline(const classical::ProphetFit& fit, std::size_t n);

/**
 * Observed values (light blue), fitted values, the trend (red) and one dashed
 * vertical marker per changepoint. `values` must be in the units of the fit,
 * times are sample indices.
 */
[[nodiscard]] std::string prophet_svg(const classical::ProphetFit& fit, std::span<const double> values,
                                      double interval_seconds);

struct NamedSeries {
    std::string name;
    std::vector<double> values;
};

/**
 * Ground truth plus one polyline per model, each with its own stroke style,
 * and a legend of model count + 1 entries. Sample i is drawn at
 * (x0 + i) * interval seconds. Every prediction must match the truth length.
 */
[[nodiscard]] std::string compare_svg(std::span<const double> truth, const std::vector<NamedSeries>& predictions,
                                      double interval_seconds, double x0 = 0.0);

}  // namespace hrf::plot
