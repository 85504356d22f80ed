#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hrf::nn {

std::vector<PeriodChoice> select_periods(const Tensor& amplitudes, std::size_t length, std::size_t k) {
    if (amplitudes.rank() != 2) throw DimensionError("select_periods expects [B,bins], got " + shape_str(amplitudes.shape()));
    const std::size_t rows = amplitudes.dim(0), bins = amplitudes.dim(1);
    if (bins < 2) throw DimensionError("need at least one non-DC bin");
    if (k == 0) throw ConfigError("top_k_periods must be >= 1");
    const std::size_t take = std::min(k, bins - 1);
    const auto a = amplitudes.data();
    std::vector<PeriodChoice> out(rows);
    std::vector<std::size_t> order(bins - 1);
    for (std::size_t r = 0; r < rows; ++r) {
        std::iota(order.begin(), order.end(), std::size_t{1});
        const double* row = a.data() + r * bins;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return row[x] > row[y]; });
        for (std::size_t j = 0; j < take; ++j) {
            const std::size_t bin = order[j];
            out[r].bins.push_back(bin);
            const auto period = static_cast<std::size_t>(std::lround(double(length) / double(bin)));
            out[r].periods.push_back(std::max<std::size_t>(1, period));
        }
    }
    return out;
}

TimesNet::TimesNet(std::size_t lookback, std::size_t horizon, TimesNetConfig cfg)
    : ForecastModel(lookback, horizon), cfg_(cfg) {
    if (cfg.top_k_periods == 0) throw ConfigError("top_k_periods must be >= 1");
    if (cfg.fft_blocks == 0 || cfg.conv_blocks == 0 || cfg.channels == 0) {
        throw ConfigError("TimesNet needs fft blocks, conv blocks and channels >= 1");
    }
    const std::size_t c = cfg.channels, T = lookback + horizon;
    align_ = Linear(params_, lookback, T);
    embed_ = Linear(params_, 1, c);
    for (std::size_t i = 0; i < cfg.fft_blocks; ++i) {
        Block b;
        for (std::size_t j = 0; j < cfg.conv_blocks; ++j) {
            b.kernels.push_back(params_.add({c, c, 3, 3}, Init::glorot(double(9 * c), double(9 * c))));
            b.biases.push_back(params_.add({c}, Init::zeros()));
        }
        b.norm = LayerNorm(params_, c);
        blocks_.push_back(std::move(b));
    }
    project_ = Linear(params_, c, 1);
}

std::string TimesNet::config_string() const {
    std::ostringstream os;
    os << "timesnet L=" << lookback() << " H=" << horizon() << " fft_blocks=" << cfg_.fft_blocks
       << " conv_blocks=" << cfg_.conv_blocks << " top_k=" << cfg_.top_k_periods << " channels=" << cfg_.channels;
    return os.str();
}

Tensor TimesNet::channel_spectrum(const Tensor& x) {
    if (x.rank() != 3) throw DimensionError("channel_spectrum expects [B,C,T], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
    const Tensor mags = ops::rfft_magnitudes(ops::reshape(x, {B * C, T}));
    return ops::mean(ops::reshape(mags, {B, C, T / 2 + 1}), 1);
}

Tensor TimesNet::forward_impl(const Tensor& batch) {
    const std::size_t B = batch.dim(0), T = lookback() + horizon();
    // [B,L] -> [B,T] -> [B,T,C] -> [B,C,T]
    Tensor h = ops::transpose(embed_(ops::reshape(align_(batch), {B, T, 1})), 1, 2);
    for (const Block& block : blocks_) {
        const Tensor spectrum = channel_spectrum(h);
        last_periods_ = select_periods(spectrum, T, cfg_.top_k_periods);
        const std::size_t k = last_periods_.front().bins.size();
        std::vector<std::vector<std::size_t>> bins(B);
        for (std::size_t b = 0; b < B; ++b) bins[b] = last_periods_[b].bins;
        const Tensor weights = ops::softmax(ops::gather_columns(spectrum, bins), 1);  // [B,k]
        last_weights_ = weights.detach();

        Tensor mixed;
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<std::size_t> periods(B), lengths(B);
            std::size_t longest = T;
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t p = last_periods_[b].periods[j];
                periods[b] = p;
                lengths[b] = (T + p - 1) / p * p;
                longest = std::max(longest, lengths[b]);
            }
            Tensor g = longest > T ? ops::pad_zeros_last(h, longest) : h;
            for (std::size_t i = 0; i < block.kernels.size(); ++i) {
                g = ops::relu(ops::grid_conv2d(g, block.kernels[i], block.biases[i], periods, lengths));
            }
            if (longest > T) g = ops::slice(g, 2, 0, T);
            const Tensor term = ops::mul_prefix(g, ops::select(weights, 1, j));
            mixed = mixed.defined() ? ops::add(mixed, term) : term;
        }
        h = ops::transpose(block.norm(ops::transpose(ops::add(h, mixed), 1, 2)), 1, 2);
    }
    const Tensor out = ops::reshape(project_(ops::transpose(h, 1, 2)), {B, T});  // [B,T,C] -> [B,T,1]
    return ops::slice(out, 1, lookback(), horizon());
}

}  // namespace hrf::nn
