#include "hrf/trainer.hpp"

#include "hrf/checkpoint.hpp"
#include "hrf/ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace hrf::train {

using data::FoldSpec;
using data::NormalizationParams;
using data::WindowedDataset;

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (folds == 0) throw ConfigError("folds must be >= 1");
}

std::string TrainConfig::str() const {
    std::ostringstream os;
    os.precision(17);
    os << "lr=" << lr << " beta1=" << beta1 << " beta2=" << beta2 << " eps=" << eps << " epochs=" << epochs
       << " batch=" << batch_size << " seed=" << seed << " folds=" << folds;
    return os.str();
}

AdamState AdamState::for_params(const std::vector<Tensor>& params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.numel(), 0.0);
        s.v.emplace_back(p.numel(), 0.0);
    }
    return s;
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, const TrainConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("Adam state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].numel()) throw DimensionError("Adam state shape mismatch");
        for (double g : params[i].grad()) {
            if (!std::isfinite(g)) {
                throw TrainingDivergence("non-finite gradient in parameter " + std::to_string(i) + " " +
                                         shape_str(params[i].shape()));
            }
        }
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        const auto g = p.grad();
        auto theta = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            theta[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

Snapshot take_snapshot(const nn::ForecastModel& model) {
    Snapshot s;
    for (const auto& p : model.parameters()) s.tensors.push_back(p.detach());
    return s;
}

void restore(nn::ForecastModel& model, const Snapshot& snapshot) {
    const auto& params = model.parameters();
    if (params.size() != snapshot.tensors.size()) {
        throw DimensionError("snapshot has " + std::to_string(snapshot.tensors.size()) + " tensors, model has " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != snapshot.tensors[i].shape()) {
            throw DimensionError("snapshot tensor " + std::to_string(i) + " is " +
                                 shape_str(snapshot.tensors[i].shape()) + ", model expects " +
                                 shape_str(params[i].shape()));
        }
        Tensor p = params[i];
        const auto src = snapshot.tensors[i].data();
        std::copy(src.begin(), src.end(), p.mutable_data().begin());
    }
}

void TrainLog::write_csv(std::ostream& out) const {
    out << "epoch,fold,train_loss,val_loss,seconds\n";
    out.precision(17);
    for (const auto& r : records) {
        out << r.epoch << ',' << r.fold << ',' << r.train_loss << ',';
        if (r.val_loss) out << *r.val_loss;
        out << ',' << r.seconds << '\n';
    }
}

namespace {

struct Batch {
    Tensor inputs;
    Tensor targets;
};

Batch gather(const WindowedDataset& data, const std::vector<std::size_t>& indices, std::size_t begin,
             std::size_t end) {
    const std::size_t L = data.lookback(), H = data.horizon(), n = end - begin;
    Buffer x(n * L), y(n * H);
    for (std::size_t r = 0; r < n; ++r) {
        const auto in = data.input(indices[begin + r]);
        const auto out = data.target(indices[begin + r]);
        std::copy(in.begin(), in.end(), x.begin() + static_cast<std::ptrdiff_t>(r * L));
        std::copy(out.begin(), out.end(), y.begin() + static_cast<std::ptrdiff_t>(r * H));
    }
    return {Tensor::from({n, L}, std::move(x)), Tensor::from({n, H}, std::move(y))};
}

std::vector<std::size_t> val_indices(const FoldSpec& fold) {
    std::vector<std::size_t> out;
    for (std::size_t i = fold.val.begin; i < fold.val.end; ++i) out.push_back(i);
    return out;
}

void check_model(const nn::ForecastModel& model, const WindowedDataset& data) {
    if (model.lookback() != data.lookback() || model.horizon() != data.horizon()) {
        throw DimensionError("model expects L=" + std::to_string(model.lookback()) +
                             " H=" + std::to_string(model.horizon()) + ", data has L=" +
                             std::to_string(data.lookback()) + " H=" + std::to_string(data.horizon()));
    }
}

}  // namespace

double evaluate_loss(nn::ForecastModel& model, const WindowedDataset& data, const std::vector<std::size_t>& indices,
                     std::size_t batch_size) {
    if (indices.empty()) throw InputError("no windows to evaluate");
    const auto pred = predict(model, data, indices, batch_size);
    const std::size_t H = data.horizon();
    double sum = 0.0;
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto y = data.target(indices[r]);
        for (std::size_t h = 0; h < H; ++h) {
            const double e = pred[r * H + h] - y[h];
            sum += e * e;
        }
    }
    return sum / static_cast<double>(indices.size() * H);
}

std::vector<double> predict(nn::ForecastModel& model, const WindowedDataset& data,
                            const std::vector<std::size_t>& indices, std::size_t batch_size) {
    check_model(model, data);
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    NoGradGuard guard;
    std::vector<double> out;
    out.reserve(indices.size() * data.horizon());
    for (std::size_t b = 0; b < indices.size(); b += batch_size) {
        const Batch batch = gather(data, indices, b, std::min(indices.size(), b + batch_size));
        const Tensor y = model.forward(batch.inputs);
        out.insert(out.end(), y.data().begin(), y.data().end());
    }
    return out;
}

std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& indices, std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order = indices;
    // Fisher-Yates with plain modulo draws, so the order does not depend on the
    // standard library's distribution implementation.
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

FoldResult train_fold(nn::ForecastModel& model, const FoldSpec& fold, const WindowedDataset& data,
                      const TrainConfig& cfg, TrainLog* log) {
    cfg.validate();
    check_model(model, data);
    const std::vector<std::size_t> train = fold.train_indices();
    if (train.empty()) throw InsufficientDataError("fold " + std::to_string(fold.fold_index) + " has no training windows");
    for (std::size_t i : train) {
        if (i >= data.size()) throw DimensionError("fold refers to window " + std::to_string(i) + " beyond the data");
    }

    model.reset(cfg.seed);
    const auto& params = model.parameters();
    AdamState state = AdamState::for_params(params);
    auto& graph = GradGraph::current();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto order = epoch_order(train, cfg.seed, epoch);
        Snapshot last_good = take_snapshot(model);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg.batch_size);
            const Batch batch = gather(data, order, b, end);
            graph.reset();
            for (auto p : params) p.zero_grad();
            Tensor loss = ops::mse_loss(model.forward(batch.inputs), batch.targets);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                graph.reset();
                throw DivergenceError("fold " + std::to_string(fold.fold_index) + " epoch " + std::to_string(epoch) +
                                          ": non-finite loss",
                                      fold.fold_index, std::move(last_good));
            }
            backward(loss);
            try {
                adam_step(params, state, cfg);
            } catch (const TrainingDivergence& e) {
                throw DivergenceError("fold " + std::to_string(fold.fold_index) + " epoch " + std::to_string(epoch) +
                                          ": " + e.what(),
                                      fold.fold_index, std::move(last_good));
            }
            loss_sum += value * static_cast<double>(end - b);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.fold = fold.fold_index;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (epoch == cfg.epochs && !fold.val.empty()) rec.val_loss = evaluate_loss(model, data, val_indices(fold));
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log != nullptr) log->records.push_back(rec);
    }

    FoldResult result;
    result.fold_index = fold.fold_index;
    result.snapshot = take_snapshot(model);
    result.val_loss = fold.val.empty() ? 0.0 : evaluate_loss(model, data, val_indices(fold));
    return result;
}

NormalizationParams fold_normalization(const WindowedDataset& raw, const FoldSpec& fold) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i : fold.train_indices()) {
        for (double v : raw.input(i)) lo = std::min(lo, v), hi = std::max(hi, v);
        for (double v : raw.target(i)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw DegenerateError("fold " + std::to_string(fold.fold_index) + " training data is constant");
    return {lo, hi};
}

WindowedDataset normalize(const WindowedDataset& raw, const NormalizationParams& p) {
    return WindowedDataset(data::apply_minmax(raw.inputs(), p), data::apply_minmax(raw.targets(), p), raw.lookback(),
                           raw.horizon(), raw.stride());
}

double CvResult::mean_val_loss() const {
    if (results.empty()) throw EvaluationError("no fold results");
    double s = 0.0;
    for (const auto& r : results) s += r.val_loss;
    return s / static_cast<double>(results.size());
}

CvResult cross_validate(const ModelFactory& factory, const WindowedDataset& raw, const TrainConfig& cfg,
                        TrainLog* log, Normalization mode) {
    cfg.validate();
    CvResult cv;
    cv.folds = data::make_folds(raw.size(), cfg.folds, raw.span(), raw.stride());
    if (log != nullptr) log->seed = cfg.seed;
    NormalizationParams global;
    if (mode == Normalization::Global) {
        std::vector<double> all(raw.inputs().begin(), raw.inputs().end());
        all.insert(all.end(), raw.targets().begin(), raw.targets().end());
        global = data::fit_minmax(all);
    }
    std::optional<std::size_t> failed;
    std::string failure;
    for (const auto& fold : cv.folds) {
        const NormalizationParams norm = mode == Normalization::Global ? global : fold_normalization(raw, fold);
        const WindowedDataset data = normalize(raw, norm);
        auto model = factory();
        if (log != nullptr && log->config_digest == 0) log->config_digest = nn::fnv1a(model->config_string() + ";" + cfg.str());
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + fold.fold_index;
        try {
            cv.results.push_back(train_fold(*model, fold, data, fold_cfg, log));
            cv.norms.push_back(norm);
        } catch (const TrainingDivergence& e) {
            if (!failed) {
                failed = fold.fold_index;
                failure = e.what();
            }
        }
    }
    if (failed) {
        throw CrossValidationError("fold " + std::to_string(*failed) + " diverged: " + failure, *failed, std::move(cv));
    }
    return cv;
}

}  // namespace hrf::train
