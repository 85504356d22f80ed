#pragma once

#include "hrf/dataset.hpp"
#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hrf::train {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t folds = 5;
    /// Throws ConfigError.
    void validate() const;
    /// Canonical text of every field, for digests.
    [[nodiscard]] std::string str() const;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
    [[nodiscard]] static AdamState for_params(const std::vector<Tensor>& params);
};

/// One Adam update from each parameter's accumulated gradient (a missing
/// gradient counts as zero). Throws TrainingDivergence naming the parameter
/// if any gradient is non-finite; nothing is modified in that case.
void adam_step(const std::vector<Tensor>& params, AdamState& state, const TrainConfig& cfg);

/// Detached copies of a model's parameters.
struct Snapshot {
    std::vector<Tensor> tensors;
};
[[nodiscard]] Snapshot take_snapshot(const nn::ForecastModel& model);
/// Copies values back; throws DimensionError on a shape mismatch.
void restore(nn::ForecastModel& model, const Snapshot& snapshot);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::size_t fold = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;  // filled on the last epoch of a fold
    double seconds = 0.0;
};

struct TrainLog {
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
    std::vector<EpochRecord> records;
    /// Header epoch,fold,train_loss,val_loss,seconds.
    void write_csv(std::ostream& out) const;
};

struct FoldResult {
    std::size_t fold_index = 0;
    Snapshot snapshot;
    double val_loss = 0.0;
};

/// Raised when the loss or a gradient stops being finite.
class DivergenceError : public TrainingDivergence {
  public:
    DivergenceError(const std::string& what, std::size_t fold, Snapshot last_good)
        : TrainingDivergence(what), fold_(fold), last_good_(std::move(last_good)) {}
    [[nodiscard]] std::size_t fold() const noexcept { return fold_; }
    [[nodiscard]] const Snapshot& last_good() const noexcept { return last_good_; }

  private:
    std::size_t fold_;
    Snapshot last_good_;
};

/// Mean MSE of the model over the given windows, without recording a graph.
[[nodiscard]] double evaluate_loss(nn::ForecastModel& model, const data::WindowedDataset& data,
                                   const std::vector<std::size_t>& indices, std::size_t batch_size = 256);

/// Model forecasts [indices.size() * H] in the same normalized space as `data`.
[[nodiscard]] std::vector<double> predict(nn::ForecastModel& model, const data::WindowedDataset& data,
                                          const std::vector<std::size_t>& indices, std::size_t batch_size = 256);

/// Window order for one epoch: a permutation of `indices` drawn from (seed, epoch) alone.
[[nodiscard]] std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& indices, std::uint64_t seed,
                                                   std::size_t epoch);

/**
 * Trains `model` on the fold's training windows of `data` (already normalized).
 *
 * The model is re-initialized from cfg.seed, and the same seed drives the
 * per-epoch shuffles, so the result is a pure function of its arguments.
 * Records are appended to `log` when given.
 */
FoldResult train_fold(nn::ForecastModel& model, const data::FoldSpec& fold, const data::WindowedDataset& data,
                      const TrainConfig& cfg, TrainLog* log = nullptr);

/// Min/max over every value the fold's training windows touch.
[[nodiscard]] data::NormalizationParams fold_normalization(const data::WindowedDataset& raw,
                                                           const data::FoldSpec& fold);
[[nodiscard]] data::WindowedDataset normalize(const data::WindowedDataset& raw, const data::NormalizationParams& p);

enum class Normalization {
    PerFold,  // fit on each fold's training windows
    Global,   // fit once on the whole series
};

struct CvResult {
    std::vector<data::FoldSpec> folds;
    std::vector<data::NormalizationParams> norms;
    std::vector<FoldResult> results;
    [[nodiscard]] double mean_val_loss() const;
};

/// A fold diverged. Completed folds are kept in partial().
class CrossValidationError : public TrainingDivergence {
  public:
    CrossValidationError(const std::string& what, std::size_t fold, CvResult partial)
        : TrainingDivergence(what), fold_(fold), partial_(std::move(partial)) {}
    [[nodiscard]] std::size_t fold() const noexcept { return fold_; }
    [[nodiscard]] const CvResult& partial() const noexcept { return partial_; }

  private:
    std::size_t fold_;
    CvResult partial_;
};

using ModelFactory = std::function<std::unique_ptr<nn::ForecastModel>()>;

/// One fresh model per fold, seeded cfg.seed + fold index.
[[nodiscard]] CvResult cross_validate(const ModelFactory& factory, const data::WindowedDataset& raw,
                                      const TrainConfig& cfg, TrainLog* log = nullptr,
                                      Normalization mode = Normalization::PerFold);

}  // namespace hrf::train
