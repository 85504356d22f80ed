#pragma once

#include "hrf/dataset.hpp"
#include "hrf/evaluator.hpp"
#include "hrf/models.hpp"
#include "hrf/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hrf::bench {

/// Every model the bench knows, classical first.
[[nodiscard]] const std::vector<std::string>& all_model_names();
/// Expands "all", lower-cases and de-duplicates. Throws ConfigError listing the valid names.
[[nodiscard]] std::vector<std::string> resolve_models(const std::vector<std::string>& names);

/**
 * Data source spec:
 *   synthetic:<profile>:seed=N[:length=N][:phi=X]
 *   file:<path>
 */
struct DataSpec {
    enum class Kind { Synthetic, File } kind = Kind::Synthetic;
    data::SynthProfile profile = data::SynthProfile::QuasiPeriodic;
    std::uint64_t seed = 0;
    std::size_t length = 1800;
    double phi = 0.7;
    std::filesystem::path path;
};
/// Throws ConfigError.
[[nodiscard]] DataSpec parse_data_spec(std::string_view text);
[[nodiscard]] data::TimeSeries load(const DataSpec& spec, double interval_seconds);

struct BenchConfig {
    std::vector<std::string> data{"synthetic:quasi_periodic:seed=1"};
    std::vector<std::string> models{"all"};
    std::size_t lookback = 64;
    std::size_t horizon = 16;
    std::size_t stride = 1;
    train::TrainConfig train = default_train();
    double interval_seconds = 0.5;
    std::filesystem::path out = "bench_out";
    train::Normalization normalization = train::Normalization::PerFold;
    nn::NeuralConfig neural;
    eval::ClassicalOptions classical;
    bool plots = true;
    bool checkpoints = true;

    /// Desk-scale defaults: 50 epochs, seed 0.
    [[nodiscard]] static train::TrainConfig default_train();
    /// Throws ConfigError.
    void validate() const;
};

struct ModelRun {
    std::string model;
    std::string series;
    eval::Forecasts forecasts;
    eval::Metrics metrics;
    std::uint64_t config_digest = 0;
};

struct BenchResult {
    eval::EvalReport report;
    std::vector<ModelRun> runs;
    std::vector<std::string> failures;  // "model/series: reason"
    [[nodiscard]] bool ok() const noexcept { return failures.empty(); }
};

/// Runs the whole pipeline and writes the artifacts under cfg.out. `log` gets progress lines.
[[nodiscard]] BenchResult run_bench(const BenchConfig& cfg, std::ostream& log);

/**
 * Keeps freed tensor buffers inside the process (glibc only; a no-op
 * elsewhere). Training allocates and frees the same large blocks every step,
 * and the default mmap threshold turns each of them into a page-faulting
 * mmap/munmap pair.
 */
void tune_allocator();

/// run_bench plus the exit code: 0 on full success, 1 when any (model, series) failed.
[[nodiscard]] int cmd_bench(const BenchConfig& cfg, std::ostream& log);

/// Writes the series plot to `out`. Returns 0.
int cmd_plot_series(const data::TimeSeries& series, const std::filesystem::path& out);
/// Fits Prophet to the whole series (in bpm) and writes the fit plot.
int cmd_plot_prophet(const data::TimeSeries& series, const classical::ProphetConfig& cfg,
                     const std::filesystem::path& out);
/// Truth and predictions from CSV columns: first column truth, one column per model, header row of names.
int cmd_plot_compare(const std::filesystem::path& csv, const std::filesystem::path& out, double interval_seconds);

}  // namespace hrf::bench
