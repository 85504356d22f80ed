#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"

#include <algorithm>
#include <sstream>

namespace hrf::nn {

TsMixer::TsMixer(std::size_t lookback, std::size_t horizon, TsMixerConfig cfg)
    : ForecastModel(lookback, horizon), cfg_(cfg) {
    if (cfg.mlp_layers == 0 || cfg.max_feature_dim == 0) throw ConfigError("TSMixer needs layers and a feature width");
    const std::size_t c = cfg.max_feature_dim, L = lookback;
    input_ = Linear(params_, 1, c);
    for (std::size_t i = 0; i < cfg.mlp_layers; ++i) {
        Mixer m;
        m.time_norm = LayerNorm(params_, c);
        m.time_mlp = Linear(params_, L, L);
        m.feature_norm = LayerNorm(params_, c);
        m.feature_in = Linear(params_, c, c);
        m.feature_out = Linear(params_, c, c);
        mixers_.push_back(std::move(m));
    }
    head_ = Linear(params_, L * c, horizon);
}

std::string TsMixer::config_string() const {
    std::ostringstream os;
    os << "tsmixer L=" << lookback() << " H=" << horizon() << " layers=" << cfg_.mlp_layers
       << " features=" << cfg_.max_feature_dim;
    return os.str();
}

Tensor TsMixer::forward_impl(const Tensor& batch) {
    const std::size_t B = batch.dim(0), L = lookback(), c = cfg_.max_feature_dim;
    Tensor x = input_(ops::reshape(batch, {B, L, 1}));  // [B, L, C]
    for (const Mixer& m : mixers_) {
        // Time mixing acts along L for each channel.
        const Tensor t = ops::transpose(m.time_norm(x), 1, 2);  // [B, C, L]
        x = ops::add(x, ops::transpose(ops::relu(m.time_mlp(t)), 1, 2));
        const Tensor f = m.feature_out(ops::relu(m.feature_in(m.feature_norm(x))));
        x = ops::add(x, f);
    }
    return head_(ops::reshape(x, {B, L * c}));
}

}  // namespace hrf::nn
