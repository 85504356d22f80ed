#include "hrf/evaluator.hpp"

#include "hrf/errors.hpp"
#include "hrf/fft.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

namespace hrf::eval {

using data::FoldSpec;
using data::NormalizationParams;
using data::WindowedDataset;

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat) {
    if (y.empty()) throw InputError("metrics need at least one value");
    if (y.size() != yhat.size()) {
        throw InputError("metric inputs differ in length: " + std::to_string(y.size()) + " vs " +
                         std::to_string(yhat.size()));
    }
}

std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

double mape(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) throw DomainError("mape undefined: true value at index " + std::to_string(i) + " is zero");
        s += std::abs(y[i] - yhat[i]) / std::abs(y[i]);
    }
    return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
    check_pair(y, yhat);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(s / static_cast<double>(y.size()));
}

Metrics compute_metrics(std::span<const double> y, std::span<const double> yhat) {
    return {mae(y, yhat), mape(y, yhat), rmse(y, yhat)};
}

void collect(const WindowedDataset& raw, const FoldSpec& fold, const WindowForecaster& f, Forecasts& out) {
    const std::size_t H = raw.horizon();
    for (std::size_t i = fold.val.begin; i < fold.val.end; ++i) {
        const auto pred = f(i);
        if (pred.size() != H) {
            throw DimensionError("forecaster returned " + std::to_string(pred.size()) + " values, horizon is " +
                                 std::to_string(H));
        }
        const auto y = raw.target(i);
        out.truth.insert(out.truth.end(), y.begin(), y.end());
        out.pred.insert(out.pred.end(), pred.begin(), pred.end());
        out.windows.push_back(i);
    }
}

Forecasts evaluate_model(nn::ForecastModel& model, const train::CvResult& cv, const WindowedDataset& raw) {
    Forecasts out;
    for (const FoldSpec& fold : cv.folds) {
        const auto it = std::find_if(cv.results.begin(), cv.results.end(),
                                     [&](const train::FoldResult& r) { return r.fold_index == fold.fold_index; });
        // norms line up with results, not folds, when a fold failed
        const auto at = static_cast<std::size_t>(it - cv.results.begin());
        if (it == cv.results.end() || at >= cv.norms.size()) {
            throw EvaluationError("no snapshot for fold " + std::to_string(fold.fold_index));
        }
        const NormalizationParams& norm = cv.norms[at];
        train::restore(model, it->snapshot);
        const WindowedDataset data = train::normalize(raw, norm);
        std::vector<std::size_t> idx(fold.val.size());
        std::iota(idx.begin(), idx.end(), fold.val.begin);
        const auto pred = train::predict(model, data, idx);
        const std::size_t H = raw.horizon();
        collect(raw, fold,
                [&](std::size_t i) {
                    const auto first = pred.begin() + static_cast<std::ptrdiff_t>((i - fold.val.begin) * H);
                    return data::invert_minmax(std::span<const double>(&*first, H), norm);
                },
                out);
    }
    return out;
}

Forecasts last_value_baseline(const WindowedDataset& raw, const std::vector<FoldSpec>& folds) {
    Forecasts out;
    for (const auto& fold : folds) {
        collect(raw, fold, [&](std::size_t i) { return std::vector<double>(raw.horizon(), raw.input(i).back()); },
                out);
    }
    return out;
}

Forecasts mean_baseline(const WindowedDataset& raw, const std::vector<FoldSpec>& folds) {
    Forecasts out;
    for (const auto& fold : folds) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i : fold.train_indices()) {
            for (double v : raw.input(i)) s += v, ++n;
            for (double v : raw.target(i)) s += v, ++n;
        }
        if (n == 0) throw InsufficientDataError("fold " + std::to_string(fold.fold_index) + " has no training data");
        const double mean = s / static_cast<double>(n);
        collect(raw, fold, [&](std::size_t) { return std::vector<double>(raw.horizon(), mean); }, out);
    }
    return out;
}

namespace {

void check_classical_inputs(std::span<const double> series, const WindowedDataset& raw,
                            const std::vector<FoldSpec>& folds, const std::vector<NormalizationParams>& norms) {
    if (raw.size() == 0 || series.size() < raw.start(raw.size() - 1) + raw.span() ||
        series.size() >= raw.start(raw.size() - 1) + raw.span() + raw.stride()) {
        throw DimensionError("series of length " + std::to_string(series.size()) + " is not the source of the windows");
    }
    if (norms.size() != folds.size()) throw DimensionError("one normalization per fold is required");
}

std::vector<std::span<const double>> train_segments(std::span<const double> z, const FoldSpec& fold) {
    std::vector<std::span<const double>> segs;
    for (const auto& r : fold.train_time_spans()) segs.push_back(z.subspan(r.begin, r.size()));
    return segs;
}

}  // namespace

std::vector<double> dominant_periods(std::span<const double> y, std::size_t count, int max_period) {
    const std::size_t n = y.size();
    if (n < 4 || max_period < 2) return {};
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> z(y.begin(), y.end());
    for (double& v : z) v -= mean;
    const auto mag = fft::rfft_magnitudes(z);
    // period n/k in [2, max_period]
    const std::size_t k_lo = std::max<std::size_t>(1, (n + static_cast<std::size_t>(max_period) - 1) /
                                                           static_cast<std::size_t>(max_period));
    const std::size_t k_hi = std::min(mag.size() - 1, n / 2);
    if (k_lo > k_hi) return {};
    double band = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) band += mag[k];
    band /= static_cast<double>(k_hi - k_lo + 1);

    std::vector<std::size_t> peaks;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const double left = k > 0 ? mag[k - 1] : 0.0;
        const double right = k + 1 < mag.size() ? mag[k + 1] : 0.0;
        if (mag[k] > left && mag[k] >= right && mag[k] >= 3.0 * band) peaks.push_back(k);
    }
    std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
    if (peaks.size() > count) peaks.resize(count);

    std::vector<double> out;
    for (std::size_t k : peaks) {
        double shift = 0.0;
        if (k > 0 && k + 1 < mag.size() && mag[k - 1] > 0.0 && mag[k + 1] > 0.0) {
            const double a = std::log(mag[k - 1]), b = std::log(mag[k]), c = std::log(mag[k + 1]);
            const double den = a - 2.0 * b + c;
            if (den < 0.0) shift = std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
        }
        const double period = static_cast<double>(n) / (static_cast<double>(k) + shift);
        out.push_back(std::clamp(period, 2.0, static_cast<double>(max_period)));
    }
    return out;
}

Forecasts sarima_forecasts(std::span<const double> series, const WindowedDataset& raw,
                           const std::vector<FoldSpec>& folds, const std::vector<NormalizationParams>& norms,
                           const ClassicalOptions& options, std::vector<classical::SarimaFit>* fits) {
    check_classical_inputs(series, raw, folds, norms);
    Forecasts out;
    classical::AutoSarimaOptions opts = options.sarima;
    opts.max_period = options.max_period;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const auto z = data::apply_minmax(series, norms[k]);
        classical::SarimaFit fit;
        try {
            fit = classical::auto_sarima(train_segments(z, folds[k]), opts);
        } catch (const classical::SarimaFitFailure& e) {
            // keep the best point the optimizer reached
            fit = e.best();
        }
        const classical::SarimaForecaster fc(fit, z);
        collect(raw, folds[k],
                [&](std::size_t i) {
                    return data::invert_minmax(fc.forecast(raw.start(i) + raw.lookback(), raw.horizon()), norms[k]);
                },
                out);
        if (fits != nullptr) fits->push_back(std::move(fit));
    }
    return out;
}

Forecasts prophet_forecasts(std::span<const double> series, const WindowedDataset& raw,
                            const std::vector<FoldSpec>& folds, const std::vector<NormalizationParams>& norms,
                            const ClassicalOptions& options, std::vector<classical::ProphetFit>* fits) {
    check_classical_inputs(series, raw, folds, norms);
    Forecasts out;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const auto z = data::apply_minmax(series, norms[k]);
        std::vector<double> t, y;
        std::span<const double> longest;
        for (const auto& r : folds[k].train_time_spans()) {
            for (std::size_t i = r.begin; i < r.end; ++i) t.push_back(static_cast<double>(i)), y.push_back(z[i]);
            if (r.size() > longest.size()) longest = std::span<const double>(z).subspan(r.begin, r.size());
        }
        classical::ProphetConfig cfg = options.prophet;
        if (cfg.seasonal_periods.empty()) {
            cfg.seasonal_periods = dominant_periods(longest, options.prophet_periods, options.max_period);
        }
        classical::ProphetFit fit;
        try {
            fit = classical::prophet_fit(t, y, cfg);
        } catch (const classical::ProphetFitFailure& e) {
            fit = e.best();
        }
        collect(raw, folds[k],
                [&](std::size_t i) {
                    std::vector<double> tf(raw.horizon());
                    std::iota(tf.begin(), tf.end(), static_cast<double>(raw.start(i) + raw.lookback()));
                    return data::invert_minmax(classical::prophet_forecast(fit, tf), norms[k]);
                },
                out);
        if (fits != nullptr) fits->push_back(std::move(fit));
    }
    return out;
}

std::vector<ModelSummary> EvalReport::averages() const {
    std::vector<ModelSummary> out;
    std::vector<std::size_t> counts;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const ModelSummary& s) { return s.model == r.model; });
        if (it == out.end()) {
            out.push_back({r.model, {}});
            counts.push_back(0);
            it = out.end() - 1;
        }
        it->avg.mae += r.metrics.mae;
        it->avg.mape += r.metrics.mape;
        it->avg.rmse += r.metrics.rmse;
        ++counts[static_cast<std::size_t>(it - out.begin())];
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto n = static_cast<double>(counts[i]);
        out[i].avg.mae /= n;
        out[i].avg.mape /= n;
        out[i].avg.rmse /= n;
    }
    return out;
}

void EvalReport::write_csv(std::ostream& out) const {
    out << "model,series,mae,mape,rmse\n";
    for (const auto& r : rows) {
        out << r.model << ',' << r.series << ',' << shortest(r.metrics.mae) << ',' << shortest(r.metrics.mape) << ','
            << shortest(r.metrics.rmse) << '\n';
    }
    for (const auto& s : averages()) {
        out << s.model << ",AVG," << shortest(s.avg.mae) << ',' << shortest(s.avg.mape) << ','
            << shortest(s.avg.rmse) << '\n';
    }
}

RenderedTable render_table(std::vector<ModelSummary> summaries) {
    std::stable_sort(summaries.begin(), summaries.end(),
                     [](const ModelSummary& a, const ModelSummary& b) { return a.avg.mae < b.avg.mae; });
    RenderedTable out;

    out.csv = "model,avg_mae,avg_mape,avg_rmse\n";
    for (const auto& s : summaries) {
        out.csv += s.model + ',' + fixed3(s.avg.mae) + ',' + fixed3(s.avg.mape) + ',' + fixed3(s.avg.rmse) + '\n';
    }

    struct Row {
        const char* label;
        double Metrics::*field;
    };
    const Row rows[] = {{"Avg MAE", &Metrics::mae}, {"Avg MAPE", &Metrics::mape}, {"Avg RMSE", &Metrics::rmse}};
    std::vector<std::vector<std::string>> cells(4, std::vector<std::string>(summaries.size() + 1));
    cells[0][0] = "Metric";
    for (std::size_t j = 0; j < summaries.size(); ++j) cells[0][j + 1] = summaries[j].model;
    for (std::size_t r = 0; r < 3; ++r) {
        cells[r + 1][0] = rows[r].label;
        double best = 0.0;
        for (std::size_t j = 0; j < summaries.size(); ++j) {
            const double v = summaries[j].avg.*rows[r].field;
            if (j == 0 || v < best) best = v;
        }
        for (std::size_t j = 0; j < summaries.size(); ++j) {
            const double v = summaries[j].avg.*rows[r].field;
            cells[r + 1][j + 1] = fixed3(v) + (v == best ? "*" : "");
        }
    }
    std::vector<std::size_t> width(summaries.size() + 1, 0);
    for (const auto& row : cells) {
        for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
    }
    for (std::size_t r = 0; r < cells.size(); ++r) {
        std::string line;
        for (std::size_t j = 0; j < cells[r].size(); ++j) {
            if (j > 0) line += "  ";
            std::string cell = cells[r][j];
            cell.resize(width[j], ' ');
            line += cell;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out.text += line + '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) total += w;
            out.text += std::string(total + 2 * (width.size() - 1), '-') + '\n';
        }
    }
    return out;
}

RenderedTable render_table(const EvalReport& report) { return render_table(report.averages()); }

std::vector<ModelSummary> parse_table_csv(std::string_view text) {
    std::vector<ModelSummary> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != "model,avg_mae,avg_mape,avg_rmse") throw IngestionError("unexpected table header", lineno);
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 4 || f[0].empty()) throw IngestionError("expected 4 fields", lineno);
        double v[3];
        for (int i = 0; i < 3; ++i) {
            const auto& s = f[static_cast<std::size_t>(i) + 1];
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v[i]);
            if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v[i])) {
                throw IngestionError("bad number '" + s + "'", lineno);
            }
        }
        out.push_back({f[0], {v[0], v[1], v[2]}});
    }
    if (!header) throw IngestionError("empty table", 0);
    return out;
}

}  // namespace hrf::eval
