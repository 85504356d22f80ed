#pragma once

#include "hrf/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

/// Differentiable tensor operations. Every function here records its backward
/// rule on GradGraph::current() when an input requires a gradient.
namespace hrf::ops {

// Elementwise. `b` may match `a` exactly, or match a's trailing dimensions
// (bias broadcast). No other broadcasting is supported.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Multiplies x by w where w's shape is a leading prefix of x's shape.
Tensor mul_prefix(const Tensor& x, const Tensor& w);

Tensor relu(const Tensor& x);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] * w[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
/// Batched [G,m,k] x [G,k,n] -> [G,m,n]; with transpose_b, b is [G,n,k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Removes `axis` by picking one index along it.
Tensor select(const Tensor& a, std::size_t axis, std::size_t index);
/// Stacks equally shaped tensors along a new axis.
Tensor stack(std::span<const Tensor> parts, std::size_t axis);
/// Mean over `axis`, which is removed from the result.
Tensor mean(const Tensor& a, std::size_t axis);
/// Extends the last axis to `length` by repeating its final element.
Tensor pad_replicate_last(const Tensor& a, std::size_t length);
/// Extends the last axis to `length` with zeros.
Tensor pad_zeros_last(const Tensor& a, std::size_t length);
/// a[R,F] -> [R,k] picking columns indices[r][j] for each row r.
Tensor gather_columns(const Tensor& a, const std::vector<std::vector<std::size_t>>& indices);

/// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma/beta of that axis' size.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Mean squared error, returned as a one-element tensor.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/**
 * Dilated 1D convolution.
 *
 * x is [C,T] or [B,C,T]; kernel is [O,C,k]. With causal padding the input is
 * left-padded by (k-1)*dilation zeros so the output keeps length T and
 * output[t] only reads x[t - (k-1-j)*dilation] for taps j. Without it the
 * convolution is "valid" and the output has length T - (k-1)*dilation.
 */
Tensor conv1d_dilated(const Tensor& x, const Tensor& kernel, std::size_t dilation,
                      bool causal_padding = true);
Tensor conv1d_dilated(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                      std::size_t dilation, bool causal_padding = true);

/**
 * 3x3 "same" 2D convolution applied to sequences folded into grids.
 *
 * x is [B,C,T]. Sample b is read as a grid of lengths[b]/periods[b] rows by
 * periods[b] columns laid out row-major along T; neighbours that fall off
 * the grid are zero. Positions at or beyond lengths[b] are outputs of zero.
 * kernel is [O,C,3,3], bias is [O] (may be undefined).
 */
Tensor grid_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                   std::span<const std::size_t> periods, std::span<const std::size_t> lengths);

/// |DFT| of real input. x is [n] or [R,n]; result has n/2+1 bins on the last axis.
Tensor rfft_magnitudes(const Tensor& x);

struct LstmState {
    Tensor h;
    Tensor c;
};

/// One LSTM step from pre-activation gates [B,4H] laid out (input, forget, cell, output).
LstmState lstm_cell(const Tensor& gates, const Tensor& c_prev);

/**
 * A whole LSTM layer over x [B,T,in] from zero initial state, returning every
 * hidden state [B,T,h]. w_ih is [in,4h], w_hh is [h,4h], bias is [4h], with
 * the gate layout of lstm_cell. One graph node: backward runs BPTT directly.
 */
Tensor lstm_layer(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias);

struct Attention {
    Tensor output;   // [G,n,d]
    Tensor weights;  // [G,n,n], rows sum to one
};

/// softmax(q k^T / sqrt(d)) v for each of the G leading groups (heads).
Attention scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace hrf::ops
