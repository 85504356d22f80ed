#include "hrf/errors.hpp"
#include "hrf/models.hpp"

#include <algorithm>

namespace hrf::nn {

ForecastModel::ForecastModel(std::size_t lookback, std::size_t horizon) : lookback_(lookback), horizon_(horizon) {
    if (lookback == 0 || horizon == 0) throw ConfigError("lookback and horizon must be >= 1");
}

Tensor ForecastModel::forward(const Tensor& batch) {
    if (batch.rank() != 2 || batch.dim(1) != lookback_) {
        throw DimensionError(std::string(name()) + " expects input [B," + std::to_string(lookback_) + "], got " +
                             shape_str(batch.shape()));
    }
    return forward_impl(batch);
}

std::size_t ForecastModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

void ForecastModel::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params_.initialize(rng);
}

void init_params(ForecastModel& model, std::uint64_t seed) { model.reset(seed); }

const std::vector<std::string>& neural_model_names() {
    static const std::vector<std::string> names{"lstm", "tcn", "tsmixer", "timesnet", "patchtst", "itransformer"};
    return names;
}

bool is_neural_model(std::string_view name) {
    const auto& names = neural_model_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::unique_ptr<ForecastModel> make_model(std::string_view name, std::size_t lookback, std::size_t horizon,
                                          const NeuralConfig& cfg) {
    if (name == "lstm") return std::make_unique<Lstm>(lookback, horizon, cfg.lstm);
    if (name == "tcn") return std::make_unique<Tcn>(lookback, horizon, cfg.tcn);
    if (name == "tsmixer") return std::make_unique<TsMixer>(lookback, horizon, cfg.tsmixer);
    if (name == "timesnet") return std::make_unique<TimesNet>(lookback, horizon, cfg.timesnet);
    if (name == "patchtst") return std::make_unique<PatchTst>(lookback, horizon, cfg.patchtst);
    if (name == "itransformer") return std::make_unique<ITransformer>(lookback, horizon, cfg.itransformer);
    std::string valid;
    for (const auto& n : neural_model_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown neural model '" + std::string(name) + "' (valid: " + valid + ")");
}

}  // namespace hrf::nn
