#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"

#include <sstream>

namespace hrf::nn {

std::size_t PatchTstConfig::patch_count(std::size_t lookback) const {
    if (patch_len == 0) throw ConfigError("patch_len must be >= 1");
    if (lookback < patch_len) {
        throw ConfigError("lookback " + std::to_string(lookback) + " is shorter than patch_len " +
                          std::to_string(patch_len));
    }
    const std::size_t s = effective_stride();
    return (lookback - patch_len + s - 1) / s + 1;
}

PatchTst::PatchTst(std::size_t lookback, std::size_t horizon, PatchTstConfig cfg)
    : ForecastModel(lookback, horizon), cfg_(cfg) {
    if (cfg.n_layers == 0) throw ConfigError("PatchTST needs at least one layer");
    if (cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    n_patches_ = cfg.patch_count(lookback);
    padded_ = (n_patches_ - 1) * cfg.effective_stride() + cfg.patch_len;
    const std::size_t d = cfg.d_model;
    embed_ = Linear(params_, cfg.patch_len, d);
    position_ = params_.add({n_patches_, d}, Init::glorot(double(n_patches_), double(d)));
    for (std::size_t i = 0; i < cfg.n_layers; ++i) layers_.emplace_back(params_, d, cfg.n_heads, 4 * d, true);
    final_norm_ = LayerNorm(params_, d);
    head_ = Linear(params_, n_patches_ * d, horizon);
}

std::string PatchTst::config_string() const {
    std::ostringstream os;
    os << "patchtst L=" << lookback() << " H=" << horizon() << " patch=" << cfg_.patch_len
       << " stride=" << cfg_.effective_stride() << " layers=" << cfg_.n_layers << " heads=" << cfg_.n_heads
       << " d_model=" << cfg_.d_model;
    return os.str();
}

std::vector<Tensor> PatchTst::attention_maps() const {
    std::vector<Tensor> maps;
    for (auto& layer : layers_) {
        const auto& w = layer.attention().last_weights();
        if (w.defined()) maps.push_back(w);
    }
    return maps;
}

void PatchTst::capture_attention(bool on) {
    for (auto& layer : layers_) layer.attention().capture(on);
}

Tensor PatchTst::forward_impl(const Tensor& batch) {
    const std::size_t B = batch.dim(0), d = cfg_.d_model, s = cfg_.effective_stride();
    const Tensor x = padded_ > lookback() ? ops::pad_replicate_last(batch, padded_) : batch;
    std::vector<Tensor> patches;
    patches.reserve(n_patches_);
    for (std::size_t i = 0; i < n_patches_; ++i) patches.push_back(ops::slice(x, 1, i * s, cfg_.patch_len));
    Tensor h = ops::add(embed_(ops::stack(patches, 1)), position_);  // [B,n,d]
    for (auto& layer : layers_) h = layer(h);
    h = final_norm_(h);
    return head_(ops::reshape(h, {B, n_patches_ * d}));
}

}  // namespace hrf::nn
