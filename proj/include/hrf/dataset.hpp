#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrf::data {

/// Univariate heart-rate recording in beats per minute at a fixed sampling interval.
struct TimeSeries {
    std::string id;
    std::vector<double> values;
    double interval_seconds = 0.5;
};

/// Throws InputError unless values are non-empty, finite and positive and the interval is positive.
void validate(const TimeSeries& series);

enum class SeriesFormat { Csv, Plain };

/// `.csv` files are read as CSV, anything else as one reading per line.
[[nodiscard]] SeriesFormat format_for_path(const std::filesystem::path& path);

/**
 * Reads a series from disk.
 *
 * Plain files hold one decimal reading per line. CSV files need a header row
 * with a `bpm` column; a `t` column is accepted and ignored, the spacing comes
 * from `interval_seconds`. Blank lines are skipped. Errors are IngestionError
 * carrying the offending 1-based line number.
 */
[[nodiscard]] TimeSeries load_series(const std::filesystem::path& path, SeriesFormat format,
                                     double interval_seconds = 0.5);
[[nodiscard]] TimeSeries parse_series(std::string_view text, SeriesFormat format, std::string id,
                                      double interval_seconds = 0.5);

struct Outlier {
    std::size_t index = 0;
    double value = 0.0;
    double zscore = 0.0;
};

/// Readings whose population z-score magnitude exceeds `threshold`. The series is not modified.
[[nodiscard]] std::vector<Outlier> zscore_outlier_report(std::span<const double> values, double threshold = 3.0);
[[nodiscard]] std::vector<Outlier> zscore_outlier_report(const TimeSeries& series, double threshold = 3.0);
/// CSV with header `index,value,zscore`.
void write_outlier_csv(std::ostream& os, std::span<const Outlier> outliers);

struct NormalizationParams {
    double min = 0.0;
    double max = 1.0;
};

/// Min and max of the given span. Throws DegenerateError when they coincide.
[[nodiscard]] NormalizationParams fit_minmax(std::span<const double> values);
[[nodiscard]] NormalizationParams fit_minmax(const TimeSeries& series);
[[nodiscard]] double apply_minmax(double value, const NormalizationParams& p);
[[nodiscard]] double invert_minmax(double value, const NormalizationParams& p);
[[nodiscard]] std::vector<double> apply_minmax(std::span<const double> values, const NormalizationParams& p);
[[nodiscard]] std::vector<double> invert_minmax(std::span<const double> values, const NormalizationParams& p);

/// Supervised (lookback, horizon) pairs cut from one series. Pair i starts at i * stride.
class WindowedDataset {
  public:
    WindowedDataset(std::vector<double> inputs, std::vector<double> targets, std::size_t lookback,
                    std::size_t horizon, std::size_t stride);

    [[nodiscard]] std::size_t size() const noexcept { return count_; }
    [[nodiscard]] std::size_t lookback() const noexcept { return lookback_; }
    [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }
    [[nodiscard]] std::size_t stride() const noexcept { return stride_; }
    /// Length of source series covered by one pair.
    [[nodiscard]] std::size_t span() const noexcept { return lookback_ + horizon_; }
    [[nodiscard]] std::size_t start(std::size_t i) const noexcept { return i * stride_; }

    [[nodiscard]] std::span<const double> input(std::size_t i) const;
    [[nodiscard]] std::span<const double> target(std::size_t i) const;
    [[nodiscard]] std::span<const double> inputs() const noexcept { return inputs_; }
    [[nodiscard]] std::span<const double> targets() const noexcept { return targets_; }

  private:
    std::vector<double> inputs_;   // count x lookback
    std::vector<double> targets_;  // count x horizon
    std::size_t lookback_;
    std::size_t horizon_;
    std::size_t stride_;
    std::size_t count_;
};

/// Throws InsufficientDataError when the series is shorter than lookback + horizon.
[[nodiscard]] WindowedDataset make_windows(std::span<const double> values, std::size_t lookback,
                                           std::size_t horizon, std::size_t stride = 1);
[[nodiscard]] WindowedDataset make_windows(const TimeSeries& series, std::size_t lookback, std::size_t horizon,
                                           std::size_t stride = 1);
[[nodiscard]] std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride = 1);

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
    [[nodiscard]] bool empty() const noexcept { return end <= begin; }
    [[nodiscard]] bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
    [[nodiscard]] bool intersects(const IndexRange& o) const noexcept {
        return begin < o.end && o.begin < end;
    }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/**
 * One blocked cross-validation fold over window indices.
 *
 * `val` is a contiguous block of windows. `train` holds every window whose
 * source span does not intersect the validation block's source span, as at
 * most two ranges (before and after the block).
 */
struct FoldSpec {
    std::size_t fold_index = 0;
    std::vector<IndexRange> train;
    IndexRange val;
    std::size_t window_span = 1;
    std::size_t stride = 1;

    [[nodiscard]] std::vector<std::size_t> train_indices() const;
    [[nodiscard]] std::size_t train_size() const;
    /// Source-series span of window i.
    [[nodiscard]] IndexRange window_time_span(std::size_t i) const;
    /// Source-series span covered by the validation block.
    [[nodiscard]] IndexRange val_time_span() const;
    /// Source-series spans covered by the training windows, one per train range.
    [[nodiscard]] std::vector<IndexRange> train_time_spans() const;
};

/**
 * Blocked, temporally ordered folds. Block sizes differ by at most one, with
 * the remainder going to the earliest blocks. `window_span` and `stride`
 * describe how windows map onto the source series for the leakage guard.
 */
[[nodiscard]] std::vector<FoldSpec> make_folds(std::size_t n_windows, std::size_t k = 5,
                                               std::size_t window_span = 1, std::size_t stride = 1);

enum class SynthProfile { QuasiPeriodic, TrendShift, Ar1 };

[[nodiscard]] SynthProfile parse_profile(std::string_view name);
[[nodiscard]] std::string_view profile_name(SynthProfile profile);

struct SynthOptions {
    double ar_phi = 0.7;        // ar1 only
    double noise_sigma = -1.0;  // < 0 selects the profile default
    double interval_seconds = 0.5;
};

/**
 * Deterministic synthetic heart-rate series.
 *
 * - quasi_periodic: 80 bpm + 6 sin(2 pi t / 30) + 2 sin(2 pi t / 7) + N(0, 1)
 * - trend_shift: 75 bpm + 0.02 t, slope dropping by 0.04 at t = length / 2,
 *   + 3 sin(2 pi t / 50) + N(0, 0.5^2)
 * - ar1: 80 bpm + AR(1) with coefficient ar_phi and unit innovations
 */
[[nodiscard]] TimeSeries synth_series(std::uint64_t seed, std::size_t length, SynthProfile profile,
                                      const SynthOptions& options = {});

/// Index of the slope change planted by the trend_shift profile.
[[nodiscard]] constexpr std::size_t trend_shift_changepoint(std::size_t length) { return length / 2; }

}  // namespace hrf::data
