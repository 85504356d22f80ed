#pragma once

#include "hrf/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace hrf::nn {

/// How a parameter is (re)initialized.
struct Init {
    enum class Kind { Glorot, Zeros, Ones };
    Kind kind = Kind::Zeros;
    double fan_in = 0.0;
    double fan_out = 0.0;
    /// Elements [begin, end) set to `value` after the main rule (LSTM forget-gate bias).
    struct Fill {
        std::size_t begin, end;
        double value;
    };
    std::vector<Fill> fills;

    static Init glorot(double fan_in, double fan_out) { return {Kind::Glorot, fan_in, fan_out, {}}; }
    static Init zeros() { return {}; }
    static Init ones() { return {Kind::Ones, 0.0, 0.0, {}}; }
    [[nodiscard]] double glorot_bound() const;
};

/// Ordered list of learnable tensors with their init rules.
class ParamSet {
  public:
    Tensor add(Shape shape, Init init);
    [[nodiscard]] const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
    [[nodiscard]] const std::vector<Init>& inits() const noexcept { return inits_; }
    /// Re-draws every tensor in registration order from one generator.
    void initialize(std::mt19937_64& rng);

  private:
    std::vector<Tensor> tensors_;
    std::vector<Init> inits_;
};

class Linear {
  public:
    Linear() = default;
    Linear(ParamSet& params, std::size_t in, std::size_t out, bool bias = true);
    /// x[..., in] -> [..., out]
    [[nodiscard]] Tensor operator()(const Tensor& x) const;
    [[nodiscard]] const Tensor& weight() const noexcept { return w_; }
    [[nodiscard]] const Tensor& bias() const noexcept { return b_; }

  private:
    Tensor w_, b_;
};

class LayerNorm {
  public:
    LayerNorm() = default;
    LayerNorm(ParamSet& params, std::size_t dim);
    [[nodiscard]] Tensor operator()(const Tensor& x) const;

  private:
    Tensor gamma_, beta_;
};

/// Multi-head self-attention over [B, n, d].
class SelfAttention {
  public:
    SelfAttention() = default;
    SelfAttention(ParamSet& params, std::size_t d_model, std::size_t heads);
    [[nodiscard]] Tensor operator()(const Tensor& x);
    /// Attention weights [B*heads, n, n] from the last call, when capture is on.
    [[nodiscard]] const Tensor& last_weights() const noexcept { return last_weights_; }
    void capture(bool on) noexcept { capture_ = on; }

  private:
    Linear q_, k_, v_, o_;
    std::size_t d_model_ = 0, heads_ = 0;
    bool capture_ = false;
    Tensor last_weights_;
};

/// Encoder layer: self-attention and a GELU feed-forward, each with a residual.
class TransformerLayer {
  public:
    TransformerLayer() = default;
    TransformerLayer(ParamSet& params, std::size_t d_model, std::size_t heads, std::size_t d_ff, bool pre_norm);
    [[nodiscard]] Tensor operator()(const Tensor& x);
    [[nodiscard]] SelfAttention& attention() noexcept { return attn_; }
    [[nodiscard]] const SelfAttention& attention() const noexcept { return attn_; }

  private:
    SelfAttention attn_;
    LayerNorm norm1_, norm2_;
    Linear ff1_, ff2_;
    bool pre_norm_ = true;
};

}  // namespace hrf::nn
