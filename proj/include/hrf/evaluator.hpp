#pragma once

#include "hrf/dataset.hpp"
#include "hrf/models.hpp"
#include "hrf/prophet.hpp"
#include "hrf/sarima.hpp"
#include "hrf/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrf::eval {

/// Throw InputError on empty or mismatched input.
[[nodiscard]] double mae(std::span<const double> y, std::span<const double> yhat);
/// As a fraction. Throws DomainError if any y is zero.
[[nodiscard]] double mape(std::span<const double> y, std::span<const double> yhat);
[[nodiscard]] double rmse(std::span<const double> y, std::span<const double> yhat);

struct Metrics {
    double mae = 0.0;
    double mape = 0.0;
    double rmse = 0.0;
};
[[nodiscard]] Metrics compute_metrics(std::span<const double> y, std::span<const double> yhat);

/// Validation targets and forecasts in bpm, concatenated over folds in fold order.
struct Forecasts {
    std::vector<double> truth;
    std::vector<double> pred;
    /// Window index each block of H values came from.
    std::vector<std::size_t> windows;
    [[nodiscard]] Metrics metrics() const { return compute_metrics(truth, pred); }
};

/**
 * Restores each fold's snapshot into `model`, forecasts that fold's validation
 * windows in the fold's normalized space and maps both forecasts and targets
 * back to bpm. Throws EvaluationError naming a fold that has no snapshot.
 */
[[nodiscard]] Forecasts evaluate_model(nn::ForecastModel& model, const train::CvResult& cv,
                                       const data::WindowedDataset& raw);

/// Per-window forecaster in bpm: window index -> H values.
using WindowForecaster = std::function<std::vector<double>(std::size_t window)>;
/// Runs `f` over the fold's validation windows and appends to `out`.
void collect(const data::WindowedDataset& raw, const data::FoldSpec& fold, const WindowForecaster& f,
             Forecasts& out);

/// Repeats the last lookback value.
[[nodiscard]] Forecasts last_value_baseline(const data::WindowedDataset& raw, const std::vector<data::FoldSpec>& folds);
/// Mean of every value the fold's training windows touch.
[[nodiscard]] Forecasts mean_baseline(const data::WindowedDataset& raw, const std::vector<data::FoldSpec>& folds);

struct ClassicalOptions {
    classical::AutoSarimaOptions sarima;
    classical::ProphetConfig prophet;  // empty seasonal_periods: dominant_periods per fold
    int max_period = 50;
    std::size_t prophet_periods = 2;
};

/**
 * Up to `count` periods (in samples, not rounded) at the strongest local
 * peaks of the periodogram of the demeaned series, restricted to periods in
 * [2, max_period]. A peak counts only if it stands at least three times above
 * the band's mean magnitude. Sub-bin position comes from a parabola through
 * the log magnitudes around the peak.
 */
[[nodiscard]] std::vector<double> dominant_periods(std::span<const double> y, std::size_t count, int max_period);

/**
 * Classical models under the same folds. Each fold refits on its training
 * spans of `series` after that fold's min-max map and forecasts every
 * validation window. `series` must be the series `raw` was cut from.
 */
[[nodiscard]] Forecasts sarima_forecasts(std::span<const double> series, const data::WindowedDataset& raw,
                                         const std::vector<data::FoldSpec>& folds,
                                         const std::vector<data::NormalizationParams>& norms,
                                         const ClassicalOptions& options = {},
                                         std::vector<classical::SarimaFit>* fits = nullptr);
[[nodiscard]] Forecasts prophet_forecasts(std::span<const double> series, const data::WindowedDataset& raw,
                                          const std::vector<data::FoldSpec>& folds,
                                          const std::vector<data::NormalizationParams>& norms,
                                          const ClassicalOptions& options = {},
                                          std::vector<classical::ProphetFit>* fits = nullptr);

struct ReportRow {
    std::string model;
    std::string series;
    Metrics metrics;
};

struct ModelSummary {
    std::string model;
    Metrics avg;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::uint64_t seed = 0;
    std::string fold_scheme;
    std::map<std::string, std::uint64_t> config_digests;  // by model

    /// Arithmetic means over each model's series, models in first-seen order.
    [[nodiscard]] std::vector<ModelSummary> averages() const;
    /// model,series,mae,mape,rmse, then one AVG row per model. Shortest round-trip numbers.
    void write_csv(std::ostream& out) const;
};

struct RenderedTable {
    std::string text;
    std::string csv;
};

/**
 * Avg MAE / Avg MAPE / Avg RMSE rows, one column per model sorted by Avg MAE
 * (stable, so ties keep input order). The best value of each row carries a
 * `*`. The CSV twin has one line per model in the same order,
 * `model,avg_mae,avg_mape,avg_rmse`, three decimals.
 */
[[nodiscard]] RenderedTable render_table(std::vector<ModelSummary> summaries);
[[nodiscard]] RenderedTable render_table(const EvalReport& report);

/// Reads the CSV twin layout back. Throws IngestionError with the line number.
[[nodiscard]] std::vector<ModelSummary> parse_table_csv(std::string_view text);

}  // namespace hrf::eval
