#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"

#include <sstream>

namespace hrf::nn {

std::size_t TcnConfig::nominal_receptive_field() const {
    std::size_t sum = 0, d = 1;
    for (std::size_t i = 0; i < blocks; ++i, d *= dilation_base) sum += d;
    return 1 + (kernel - 1) * sum;
}

std::size_t TcnConfig::receptive_field() const { return 1 + 2 * (nominal_receptive_field() - 1); }

Tcn::Tcn(std::size_t lookback, std::size_t horizon, TcnConfig cfg) : ForecastModel(lookback, horizon), cfg_(cfg) {
    if (cfg.blocks == 0 || cfg.kernel == 0 || cfg.channels == 0 || cfg.dilation_base == 0) {
        throw ConfigError("TCN blocks, kernel, channels and dilation base must be >= 1");
    }
    const std::size_t c = cfg.channels, k = cfg.kernel;
    std::size_t in = 1, dilation = 1;
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
        Block b;
        b.dilation = dilation;
        b.k1 = params_.add({c, in, k}, Init::glorot(double(in * k), double(c * k)));
        b.b1 = params_.add({c}, Init::zeros());
        b.k2 = params_.add({c, c, k}, Init::glorot(double(c * k), double(c * k)));
        b.b2 = params_.add({c}, Init::zeros());
        if (in != c) {
            b.proj = params_.add({c, in, 1}, Init::glorot(double(in), double(c)));
            b.proj_b = params_.add({c}, Init::zeros());
        }
        blocks_.push_back(b);
        in = c;
        dilation *= cfg.dilation_base;
    }
    head_ = Linear(params_, c, horizon);
}

std::string Tcn::config_string() const {
    std::ostringstream os;
    os << "tcn L=" << lookback() << " H=" << horizon() << " blocks=" << cfg_.blocks << " kernel=" << cfg_.kernel
       << " base=" << cfg_.dilation_base << " channels=" << cfg_.channels;
    return os.str();
}

Tensor Tcn::forward_impl(const Tensor& batch) {
    const std::size_t B = batch.dim(0), L = lookback();
    Tensor x = ops::reshape(batch, {B, 1, L});
    for (const Block& b : blocks_) {
        const Tensor inner = ops::relu(ops::conv1d_dilated(x, b.k1, b.b1, b.dilation));
        const Tensor path = ops::conv1d_dilated(inner, b.k2, b.b2, b.dilation);
        const Tensor skip = b.proj.defined() ? ops::conv1d_dilated(x, b.proj, b.proj_b, 1) : x;
        x = ops::add(path, skip);
    }
    return head_(ops::select(x, 2, L - 1));
}

}  // namespace hrf::nn
