#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"

#include <algorithm>
#include <sstream>

namespace hrf::nn {

namespace {

// Centered rolling mean of odd width w with edge replication, as a matrix M so that y = x M.
void rolling_mean_map(std::vector<double>& m, std::size_t L, std::size_t width) {
    const auto half = static_cast<std::ptrdiff_t>(width / 2);
    const auto last = static_cast<std::ptrdiff_t>(L) - 1;
    for (std::ptrdiff_t t = 0; t <= last; ++t) {
        for (std::ptrdiff_t o = -half; o <= half; ++o) {
            const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(t + o, 0, last);
            m[std::size_t(src) * L + std::size_t(t)] += 1.0 / double(width);
        }
    }
}

}  // namespace

std::vector<std::vector<double>> derived_channel_maps(std::size_t L, std::size_t channels) {
    if (channels == 0) throw ConfigError("variate_channels must be >= 1");
    std::vector<std::vector<double>> maps;
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> m(L * L, 0.0);
        if (c == 0) {
            for (std::size_t t = 0; t < L; ++t) m[t * L + t] = 1.0;
        } else if (c == 1) {
            // d[0] = 0, d[t] = x[t] - x[t-1]
            for (std::size_t t = 1; t < L; ++t) {
                m[t * L + t] = 1.0;
                m[(t - 1) * L + t] = -1.0;
            }
        } else {
            // width 5 for the third channel, then 9, 17, ...
            rolling_mean_map(m, L, (std::size_t{1} << c) + 1);
        }
        maps.push_back(std::move(m));
    }
    return maps;
}

ITransformer::ITransformer(std::size_t lookback, std::size_t horizon, ITransformerConfig cfg)
    : ForecastModel(lookback, horizon), cfg_(cfg) {
    if (cfg.blocks == 0 || cfg.layers_per_block == 0) throw ConfigError("iTransformer needs blocks and layers >= 1");
    if (cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    for (auto& m : derived_channel_maps(lookback, cfg.variate_channels)) {
        channel_maps_.push_back(Tensor::from({lookback, lookback}, std::move(m)));
    }
    const std::size_t d = cfg.d_model;
    embed_ = Linear(params_, lookback, d);
    for (std::size_t i = 0; i < cfg.blocks * cfg.layers_per_block; ++i) {
        layers_.emplace_back(params_, d, cfg.n_heads, 4 * d, false);
    }
    head_ = Linear(params_, d, horizon);
}

std::string ITransformer::config_string() const {
    std::ostringstream os;
    os << "itransformer L=" << lookback() << " H=" << horizon() << " blocks=" << cfg_.blocks
       << " layers_per_block=" << cfg_.layers_per_block << " heads=" << cfg_.n_heads << " d_model=" << cfg_.d_model
       << " channels=" << cfg_.variate_channels;
    return os.str();
}

std::vector<Tensor> ITransformer::attention_maps() const {
    std::vector<Tensor> maps;
    for (auto& layer : layers_) {
        const auto& w = layer.attention().last_weights();
        if (w.defined()) maps.push_back(w);
    }
    return maps;
}

void ITransformer::capture_attention(bool on) {
    for (auto& layer : layers_) layer.attention().capture(on);
}

Tensor ITransformer::variate_tokens(const Tensor& batch) const {
    std::vector<Tensor> channels;
    channels.reserve(channel_maps_.size());
    for (const auto& m : channel_maps_) channels.push_back(ops::matmul(batch, m));
    return ops::stack(channels, 1);
}

Tensor ITransformer::forward_impl(const Tensor& batch) {
    Tensor h = embed_(variate_tokens(batch));  // [B,V,d]
    for (auto& layer : layers_) h = layer(h);
    return head_(ops::select(h, 1, 0));
}

}  // namespace hrf::nn
