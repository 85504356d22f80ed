#include "hrf/layers.hpp"

#include "hrf/errors.hpp"
#include "hrf/ops.hpp"

#include <algorithm>
#include <cmath>

namespace hrf::nn {

double Init::glorot_bound() const { return std::sqrt(6.0 / (fan_in + fan_out)); }

Tensor ParamSet::add(Shape shape, Init init) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    tensors_.push_back(t);
    inits_.push_back(std::move(init));
    return t;
}

void ParamSet::initialize(std::mt19937_64& rng) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        auto data = tensors_[i].mutable_data();
        const Init& init = inits_[i];
        switch (init.kind) {
            case Init::Kind::Glorot: {
                const double bound = init.glorot_bound();
                std::uniform_real_distribution<double> dist(-bound, bound);
                for (double& v : data) v = dist(rng);
                break;
            }
            case Init::Kind::Zeros: std::fill(data.begin(), data.end(), 0.0); break;
            case Init::Kind::Ones: std::fill(data.begin(), data.end(), 1.0); break;
        }
        for (const auto& f : init.fills) std::fill(data.begin() + f.begin, data.begin() + f.end, f.value);
        tensors_[i].zero_grad();
    }
}

Linear::Linear(ParamSet& params, std::size_t in, std::size_t out, bool bias)
    : w_(params.add({in, out}, Init::glorot(double(in), double(out)))) {
    if (bias) b_ = params.add({out}, Init::zeros());
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, w_, b_); }

LayerNorm::LayerNorm(ParamSet& params, std::size_t dim)
    : gamma_(params.add({dim}, Init::ones())), beta_(params.add({dim}, Init::zeros())) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gamma_, beta_); }

SelfAttention::SelfAttention(ParamSet& params, std::size_t d_model, std::size_t heads)
    : q_(params, d_model, d_model),
      k_(params, d_model, d_model),
      v_(params, d_model, d_model),
      o_(params, d_model, d_model),
      d_model_(d_model),
      heads_(heads) {
    if (heads == 0 || d_model % heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    }
}

Tensor SelfAttention::operator()(const Tensor& x) {
    if (x.rank() != 3 || x.dim(2) != d_model_) {
        throw DimensionError("attention expects [B,n," + std::to_string(d_model_) + "], got " + shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0), n = x.dim(1), dh = d_model_ / heads_;
    auto split = [&](const Tensor& t) {
        // [B,n,d] -> [B*h, n, dh]
        return ops::reshape(ops::permute(ops::reshape(t, {batch, n, heads_, dh}), {0, 2, 1, 3}),
                            {batch * heads_, n, dh});
    };
    auto att = ops::scaled_dot_attention(split(q_(x)), split(k_(x)), split(v_(x)));
    if (capture_) last_weights_ = att.weights.detach();
    const Tensor merged =
        ops::reshape(ops::permute(ops::reshape(att.output, {batch, heads_, n, dh}), {0, 2, 1, 3}), {batch, n, d_model_});
    return o_(merged);
}

TransformerLayer::TransformerLayer(ParamSet& params, std::size_t d_model, std::size_t heads, std::size_t d_ff,
                                   bool pre_norm)
    : attn_(params, d_model, heads),
      norm1_(params, d_model),
      norm2_(params, d_model),
      ff1_(params, d_model, d_ff),
      ff2_(params, d_ff, d_model),
      pre_norm_(pre_norm) {}

Tensor TransformerLayer::operator()(const Tensor& x) {
    if (pre_norm_) {
        const Tensor h = ops::add(x, attn_(norm1_(x)));
        return ops::add(h, ff2_(ops::gelu(ff1_(norm2_(h)))));
    }
    const Tensor h = norm1_(ops::add(x, attn_(x)));
    return norm2_(ops::add(h, ff2_(ops::gelu(ff1_(h)))));
}

}  // namespace hrf::nn
