#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"

#include <sstream>

namespace hrf::nn {

Lstm::Lstm(std::size_t lookback, std::size_t horizon, LstmConfig cfg) : ForecastModel(lookback, horizon), cfg_(cfg) {
    if (cfg.layers == 0 || cfg.hidden == 0) throw ConfigError("LSTM needs at least one layer and one hidden unit");
    const std::size_t h = cfg.hidden;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::size_t in = l == 0 ? 1 : h;
        Layer layer;
        layer.w_ih = params_.add({in, 4 * h}, Init::glorot(double(in), double(4 * h)));
        layer.w_hh = params_.add({h, 4 * h}, Init::glorot(double(h), double(4 * h)));
        Init bias = Init::zeros();
        bias.fills.push_back({h, 2 * h, 1.0});  // forget gate
        layer.bias = params_.add({4 * h}, bias);
        layers_.push_back(layer);
    }
    head_ = Linear(params_, h, horizon);
}

std::string Lstm::config_string() const {
    std::ostringstream os;
    os << "lstm L=" << lookback() << " H=" << horizon() << " layers=" << cfg_.layers << " hidden=" << cfg_.hidden;
    return os.str();
}

Tensor Lstm::forward_impl(const Tensor& batch) {
    const std::size_t B = batch.dim(0), L = lookback();
    Tensor seq = ops::reshape(batch, {B, L, 1});
    for (const Layer& layer : layers_) seq = ops::lstm_layer(seq, layer.w_ih, layer.w_hh, layer.bias);
    return head_(ops::select(seq, 1, L - 1));
}

}  // namespace hrf::nn
