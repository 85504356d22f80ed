#include "hrf/dataset.hpp"

#include "hrf/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace hrf::data {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        fields.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return fields;
}

double parse_reading(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc{} || ptr != last) {
        throw IngestionError("line " + std::to_string(line_no) + ": '" + std::string(field) +
                                 "' is not a numeric reading",
                             line_no);
    }
    if (!std::isfinite(value) || value <= 0.0) {
        throw IngestionError("line " + std::to_string(line_no) + ": heart rate must be finite and positive",
                             line_no);
    }
    return value;
}

}  // namespace

void validate(const TimeSeries& series) {
    if (series.values.empty()) throw InputError("series '" + series.id + "' is empty");
    if (!(series.interval_seconds > 0.0) || !std::isfinite(series.interval_seconds)) {
        throw InputError("series '" + series.id + "' needs a positive sampling interval");
    }
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        const double v = series.values[i];
        if (!std::isfinite(v) || v <= 0.0) {
            throw InputError("series '" + series.id + "' has a non-positive or non-finite reading at index " +
                             std::to_string(i));
        }
    }
}

SeriesFormat format_for_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv" ? SeriesFormat::Csv : SeriesFormat::Plain;
}

TimeSeries parse_series(std::string_view text, SeriesFormat format, std::string id, double interval_seconds) {
    if (!(interval_seconds > 0.0)) throw InputError("sampling interval must be positive");
    TimeSeries series{std::move(id), {}, interval_seconds};
    std::size_t line_no = 0;
    std::size_t bpm_column = 0;
    std::size_t n_columns = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        if (format == SeriesFormat::Plain) {
            series.values.push_back(parse_reading(line, line_no));
            continue;
        }
        const auto fields = split_commas(line);
        if (!header_seen) {
            header_seen = true;
            n_columns = fields.size();
            const auto it = std::find(fields.begin(), fields.end(), "bpm");
            if (it == fields.end()) {
                throw IngestionError("line " + std::to_string(line_no) + ": CSV header has no 'bpm' column", line_no);
            }
            bpm_column = static_cast<std::size_t>(it - fields.begin());
            continue;
        }
        if (fields.size() != n_columns) {
            throw IngestionError("line " + std::to_string(line_no) + ": expected " + std::to_string(n_columns) +
                                     " fields, found " + std::to_string(fields.size()),
                                 line_no);
        }
        series.values.push_back(parse_reading(fields[bpm_column], line_no));
    }
    if (series.values.empty()) throw IngestionError("series '" + series.id + "' contains no readings", 0);
    if (series.values.size() < 2) {
        throw IngestionError("series '" + series.id + "' needs at least 2 readings", line_no);
    }
    return series;
}

TimeSeries load_series(const std::filesystem::path& path, SeriesFormat format, double interval_seconds) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open series file " + path.string(), 0);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_series(buffer.str(), format, path.stem().string(), interval_seconds);
}

std::vector<Outlier> zscore_outlier_report(std::span<const double> values, double threshold) {
    if (values.size() < 2) throw InsufficientDataError("z-score screening needs at least 2 readings");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 0.0)) throw DegenerateError("z-score screening of a constant series (zero standard deviation)");
    std::vector<Outlier> flagged;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double z = (values[i] - mean) / sd;
        if (std::abs(z) > threshold) flagged.push_back({i, values[i], z});
    }
    return flagged;
}

std::vector<Outlier> zscore_outlier_report(const TimeSeries& series, double threshold) {
    return zscore_outlier_report(std::span<const double>(series.values), threshold);
}

void write_outlier_csv(std::ostream& os, std::span<const Outlier> outliers) {
    os << "index,value,zscore\n";
    for (const auto& o : outliers) {
        os << o.index << ',' << std::setprecision(17) << o.value << ',' << o.zscore << '\n';
    }
}

NormalizationParams fit_minmax(std::span<const double> values) {
    if (values.empty()) throw InputError("cannot fit min-max scaling on an empty span");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo)) throw DegenerateError("min-max scaling of a constant span (max == min)");
    return {*lo, *hi};
}

NormalizationParams fit_minmax(const TimeSeries& series) { return fit_minmax(std::span<const double>(series.values)); }

double apply_minmax(double value, const NormalizationParams& p) { return (value - p.min) / (p.max - p.min); }

double invert_minmax(double value, const NormalizationParams& p) { return value * (p.max - p.min) + p.min; }

std::vector<double> apply_minmax(std::span<const double> values, const NormalizationParams& p) {
    std::vector<double> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(), [&](double v) { return apply_minmax(v, p); });
    return out;
}

std::vector<double> invert_minmax(std::span<const double> values, const NormalizationParams& p) {
    std::vector<double> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(), [&](double v) { return invert_minmax(v, p); });
    return out;
}

WindowedDataset::WindowedDataset(std::vector<double> inputs, std::vector<double> targets, std::size_t lookback,
                                 std::size_t horizon, std::size_t stride)
    : inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      lookback_(lookback),
      horizon_(horizon),
      stride_(stride),
      count_(lookback == 0 ? 0 : inputs_.size() / lookback) {
    if (lookback == 0 || horizon == 0 || stride == 0) throw InputError("lookback, horizon and stride must be >= 1");
    if (inputs_.size() != count_ * lookback || targets_.size() != count_ * horizon) {
        throw DimensionError("window inputs and targets have different counts");
    }
}

std::span<const double> WindowedDataset::input(std::size_t i) const {
    return std::span<const double>(inputs_).subspan(i * lookback_, lookback_);
}

std::span<const double> WindowedDataset::target(std::size_t i) const {
    return std::span<const double>(targets_).subspan(i * horizon_, horizon_);
}

std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride) {
    if (lookback == 0 || horizon == 0 || stride == 0) throw InputError("lookback, horizon and stride must be >= 1");
    if (length < lookback + horizon) {
        throw InsufficientDataError("series of length " + std::to_string(length) + " is too short: need at least " +
                                    std::to_string(lookback + horizon) + " readings for lookback " +
                                    std::to_string(lookback) + " and horizon " + std::to_string(horizon));
    }
    return (length - lookback - horizon) / stride + 1;
}

WindowedDataset make_windows(std::span<const double> values, std::size_t lookback, std::size_t horizon,
                             std::size_t stride) {
    const std::size_t count = window_count(values.size(), lookback, horizon, stride);
    std::vector<double> inputs;
    std::vector<double> targets;
    inputs.reserve(count * lookback);
    targets.reserve(count * horizon);
    for (std::size_t i = 0; i < count; ++i) {
        const auto first = values.begin() + static_cast<std::ptrdiff_t>(i * stride);
        inputs.insert(inputs.end(), first, first + static_cast<std::ptrdiff_t>(lookback));
        targets.insert(targets.end(), first + static_cast<std::ptrdiff_t>(lookback),
                       first + static_cast<std::ptrdiff_t>(lookback + horizon));
    }
    return {std::move(inputs), std::move(targets), lookback, horizon, stride};
}

WindowedDataset make_windows(const TimeSeries& series, std::size_t lookback, std::size_t horizon,
                             std::size_t stride) {
    return make_windows(std::span<const double>(series.values), lookback, horizon, stride);
}

std::vector<std::size_t> FoldSpec::train_indices() const {
    std::vector<std::size_t> out;
    for (const auto& r : train) {
        for (std::size_t i = r.begin; i < r.end; ++i) out.push_back(i);
    }
    return out;
}

std::size_t FoldSpec::train_size() const {
    std::size_t n = 0;
    for (const auto& r : train) n += r.size();
    return n;
}

IndexRange FoldSpec::window_time_span(std::size_t i) const { return {i * stride, i * stride + window_span}; }

IndexRange FoldSpec::val_time_span() const {
    return {val.begin * stride, (val.end - 1) * stride + window_span};
}

std::vector<IndexRange> FoldSpec::train_time_spans() const {
    std::vector<IndexRange> spans;
    for (const auto& r : train) spans.push_back({r.begin * stride, (r.end - 1) * stride + window_span});
    return spans;
}

std::vector<FoldSpec> make_folds(std::size_t n_windows, std::size_t k, std::size_t window_span, std::size_t stride) {
    if (k == 0) throw InputError("fold count must be >= 1");
    if (window_span == 0 || stride == 0) throw InputError("window span and stride must be >= 1");
    if (n_windows < k) {
        throw InsufficientDataError(std::to_string(n_windows) + " windows cannot form " + std::to_string(k) +
                                    " folds");
    }
    const std::size_t base = n_windows / k;
    const std::size_t extra = n_windows % k;
    std::vector<FoldSpec> folds;
    std::size_t begin = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        FoldSpec fold;
        fold.fold_index = f;
        fold.val = {begin, begin + size};
        fold.window_span = window_span;
        fold.stride = stride;
        const IndexRange val_span = fold.val_time_span();
        // Window j is admissible iff j*stride + span <= val_span.begin or j*stride >= val_span.end.
        std::size_t before_end = 0;
        while (before_end < fold.val.begin && before_end * stride + window_span <= val_span.begin) ++before_end;
        if (before_end > 0) fold.train.push_back({0, before_end});
        std::size_t after_begin = (val_span.end + stride - 1) / stride;
        after_begin = std::max(after_begin, fold.val.end);
        if (after_begin < n_windows) fold.train.push_back({after_begin, n_windows});
        folds.push_back(std::move(fold));
        begin += size;
    }
    return folds;
}

SynthProfile parse_profile(std::string_view name) {
    if (name == "quasi_periodic") return SynthProfile::QuasiPeriodic;
    if (name == "trend_shift") return SynthProfile::TrendShift;
    if (name == "ar1") return SynthProfile::Ar1;
    throw ConfigError("unknown synthetic profile '" + std::string(name) +
                      "' (expected quasi_periodic, trend_shift or ar1)");
}

std::string_view profile_name(SynthProfile profile) {
    switch (profile) {
        case SynthProfile::QuasiPeriodic: return "quasi_periodic";
        case SynthProfile::TrendShift: return "trend_shift";
        case SynthProfile::Ar1: return "ar1";
    }
    return "unknown";
}

TimeSeries synth_series(std::uint64_t seed, std::size_t length, SynthProfile profile, const SynthOptions& options) {
    if (length < 2) throw InputError("synthetic series needs length >= 2");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    TimeSeries series;
    series.id = std::string(profile_name(profile)) + "_s" + std::to_string(seed);
    series.interval_seconds = options.interval_seconds;
    series.values.resize(length);
    const double two_pi = 2.0 * std::numbers::pi;
    switch (profile) {
        case SynthProfile::QuasiPeriodic: {
            const double sigma = options.noise_sigma < 0.0 ? 1.0 : options.noise_sigma;
            for (std::size_t t = 0; t < length; ++t) {
                const double td = static_cast<double>(t);
                series.values[t] = 80.0 + 6.0 * std::sin(two_pi * td / 30.0) + 2.0 * std::sin(two_pi * td / 7.0) +
                                   sigma * normal(rng);
            }
            break;
        }
        case SynthProfile::TrendShift: {
            const double sigma = options.noise_sigma < 0.0 ? 0.5 : options.noise_sigma;
            const double change = static_cast<double>(trend_shift_changepoint(length));
            for (std::size_t t = 0; t < length; ++t) {
                const double td = static_cast<double>(t);
                const double trend = 75.0 + 0.02 * td - 0.04 * std::max(0.0, td - change);
                series.values[t] = trend + 3.0 * std::sin(two_pi * td / 50.0) + sigma * normal(rng);
            }
            break;
        }
        case SynthProfile::Ar1: {
            const double sigma = options.noise_sigma < 0.0 ? 1.0 : options.noise_sigma;
            const double phi = options.ar_phi;
            double state = std::abs(phi) < 1.0 ? sigma / std::sqrt(1.0 - phi * phi) * normal(rng) : 0.0;
            for (std::size_t t = 0; t < length; ++t) {
                if (t > 0) state = phi * state + sigma * normal(rng);
                series.values[t] = 80.0 + state;
            }
            break;
        }
    }
    return series;
}

}  // namespace hrf::data
