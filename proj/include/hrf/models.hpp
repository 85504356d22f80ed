#pragma once

#include "hrf/layers.hpp"
#include "hrf/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace hrf::nn {

/**
 * Maps a batch of normalized lookback windows [B, L] to horizons [B, H].
 *
 * Parameters are registered once at construction, so `parameters()` keeps
 * the same order for the model's lifetime.
 */
class ForecastModel {
  public:
    ForecastModel(std::size_t lookback, std::size_t horizon);
    virtual ~ForecastModel() = default;
    ForecastModel(const ForecastModel&) = delete;
    ForecastModel& operator=(const ForecastModel&) = delete;

    [[nodiscard]] virtual std::string_view name() const = 0;
    /// Canonical text of every architecture setting; feeds the checkpoint digest.
    [[nodiscard]] virtual std::string config_string() const = 0;
    [[nodiscard]] Tensor forward(const Tensor& batch);

    [[nodiscard]] const std::vector<Tensor>& parameters() const noexcept { return params_.tensors(); }
    [[nodiscard]] const ParamSet& param_set() const noexcept { return params_; }
    [[nodiscard]] std::size_t parameter_count() const;
    /// Glorot-uniform weights, zero biases, unit norm gains; deterministic per seed.
    void reset(std::uint64_t seed);

    [[nodiscard]] std::size_t lookback() const noexcept { return lookback_; }
    [[nodiscard]] std::size_t horizon() const noexcept { return horizon_; }

    /// Attention weight tensors from the most recent forward (transformer models only).
    [[nodiscard]] virtual std::vector<Tensor> attention_maps() const { return {}; }
    virtual void capture_attention(bool) {}

  protected:
    [[nodiscard]] virtual Tensor forward_impl(const Tensor& batch) = 0;
    ParamSet params_;

  private:
    std::size_t lookback_;
    std::size_t horizon_;
};

void init_params(ForecastModel& model, std::uint64_t seed);

struct LstmConfig {
    std::size_t layers = 3;
    std::size_t hidden = 32;
};

struct TcnConfig {
    std::size_t blocks = 5;
    std::size_t kernel = 3;
    std::size_t dilation_base = 2;
    std::size_t channels = 32;
    /// 1 + (kernel - 1) * sum of dilations, counting one dilated conv per block.
    [[nodiscard]] std::size_t nominal_receptive_field() const;
    /// Actual receptive field: each block stacks two dilated convs.
    [[nodiscard]] std::size_t receptive_field() const;
};

struct TsMixerConfig {
    std::size_t mlp_layers = 5;
    std::size_t max_feature_dim = 16;
};

struct TimesNetConfig {
    std::size_t fft_blocks = 1;
    std::size_t conv_blocks = 4;
    std::size_t top_k_periods = 3;
    std::size_t channels = 16;
};

struct PatchTstConfig {
    std::size_t patch_len = 12;
    std::size_t stride = 0;  // 0 means patch_len
    std::size_t n_layers = 6;
    std::size_t n_heads = 8;
    std::size_t d_model = 64;
    [[nodiscard]] std::size_t effective_stride() const { return stride == 0 ? patch_len : stride; }
    /// Token count for a lookback of L, after right-padding with the last value.
    [[nodiscard]] std::size_t patch_count(std::size_t lookback) const;
};

struct ITransformerConfig {
    std::size_t blocks = 4;
    std::size_t layers_per_block = 2;
    std::size_t n_heads = 8;
    std::size_t d_model = 64;
    std::size_t variate_channels = 3;
};

struct NeuralConfig {
    LstmConfig lstm;
    TcnConfig tcn;
    TsMixerConfig tsmixer;
    TimesNetConfig timesnet;
    PatchTstConfig patchtst;
    ITransformerConfig itransformer;
};

class Lstm final : public ForecastModel {
  public:
    Lstm(std::size_t lookback, std::size_t horizon, LstmConfig cfg = {});
    [[nodiscard]] std::string_view name() const override { return "lstm"; }
    [[nodiscard]] std::string config_string() const override;

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override;

  private:
    struct Layer {
        Tensor w_ih, w_hh, bias;
    };
    LstmConfig cfg_;
    std::vector<Layer> layers_;
    Linear head_;
};

class Tcn final : public ForecastModel {
  public:
    Tcn(std::size_t lookback, std::size_t horizon, TcnConfig cfg = {});
    [[nodiscard]] std::string_view name() const override { return "tcn"; }
    [[nodiscard]] std::string config_string() const override;

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override;

  private:
    struct Block {
        Tensor k1, b1, k2, b2;
        Tensor proj, proj_b;  // undefined for identity skips
        std::size_t dilation;
    };
    TcnConfig cfg_;
    std::vector<Block> blocks_;
    Linear head_;
};

class TsMixer final : public ForecastModel {
  public:
    TsMixer(std::size_t lookback, std::size_t horizon, TsMixerConfig cfg = {});
    [[nodiscard]] std::string_view name() const override { return "tsmixer"; }
    [[nodiscard]] std::string config_string() const override;

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override;

  private:
    struct Mixer {
        LayerNorm time_norm;
        Linear time_mlp;
        LayerNorm feature_norm;
        Linear feature_in, feature_out;
    };
    TsMixerConfig cfg_;
    Linear input_;
    std::vector<Mixer> mixers_;
    Linear head_;
};

/// Periods chosen by the FFT block for one sample.
struct PeriodChoice {
    std::vector<std::size_t> bins;
    std::vector<std::size_t> periods;
};

/**
 * Top-k non-DC bins of each row of `amplitudes` [B, bins] for a sequence of
 * length `length`; period = round(length / bin). Ties go to the lower bin.
 */
[[nodiscard]] std::vector<PeriodChoice> select_periods(const Tensor& amplitudes, std::size_t length, std::size_t k);

class TimesNet final : public ForecastModel {
  public:
    TimesNet(std::size_t lookback, std::size_t horizon, TimesNetConfig cfg = {});
    [[nodiscard]] std::string_view name() const override { return "timesnet"; }
    [[nodiscard]] std::string config_string() const override;

    /// Channel-averaged amplitude spectrum of x [B, C, T] -> [B, T/2+1].
    [[nodiscard]] static Tensor channel_spectrum(const Tensor& x);
    /// Periods picked for the embedded sequence of the most recent forward.
    [[nodiscard]] const std::vector<PeriodChoice>& last_periods() const noexcept { return last_periods_; }
    /// Softmax branch weights [B, k] of the most recent forward.
    [[nodiscard]] const Tensor& last_branch_weights() const noexcept { return last_weights_; }

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override;

  private:
    struct Block {
        std::vector<Tensor> kernels, biases;
        LayerNorm norm;
    };
    TimesNetConfig cfg_;
    Linear align_;
    Linear embed_;
    std::vector<Block> blocks_;
    Linear project_;
    std::vector<PeriodChoice> last_periods_;
    Tensor last_weights_;
};

class PatchTst final : public ForecastModel {
  public:
    PatchTst(std::size_t lookback, std::size_t horizon, PatchTstConfig cfg = {});
    [[nodiscard]] std::string_view name() const override { return "patchtst"; }
    [[nodiscard]] std::string config_string() const override;
    [[nodiscard]] std::vector<Tensor> attention_maps() const override;
    void capture_attention(bool on) override;
    [[nodiscard]] std::size_t token_count() const noexcept { return n_patches_; }

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override;

  private:
    PatchTstConfig cfg_;
    std::size_t n_patches_;
    std::size_t padded_;
    Linear embed_;
    Tensor position_;
    std::vector<TransformerLayer> layers_;
    LayerNorm final_norm_;
    Linear head_;
};

/// Fixed linear maps [L, L] producing the derived channels x -> x * M_c.
[[nodiscard]] std::vector<std::vector<double>> derived_channel_maps(std::size_t lookback, std::size_t channels);

class ITransformer final : public ForecastModel {
  public:
    ITransformer(std::size_t lookback, std::size_t horizon, ITransformerConfig cfg = {});
    [[nodiscard]] std::string_view name() const override { return "itransformer"; }
    [[nodiscard]] std::string config_string() const override;
    [[nodiscard]] std::vector<Tensor> attention_maps() const override;
    void capture_attention(bool on) override;
    [[nodiscard]] std::size_t token_count() const noexcept { return cfg_.variate_channels; }
    /// Derived channel tokens [B, V, L] for a batch [B, L].
    [[nodiscard]] Tensor variate_tokens(const Tensor& batch) const;

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override;

  private:
    ITransformerConfig cfg_;
    std::vector<Tensor> channel_maps_;
    Linear embed_;
    std::vector<TransformerLayer> layers_;
    Linear head_;
};

[[nodiscard]] const std::vector<std::string>& neural_model_names();
[[nodiscard]] bool is_neural_model(std::string_view name);
/// Throws ConfigError for unknown names.
[[nodiscard]] std::unique_ptr<ForecastModel> make_model(std::string_view name, std::size_t lookback,
                                                        std::size_t horizon, const NeuralConfig& cfg = {});

}  // namespace hrf::nn
