#include "hrf/ops.hpp"

#include "hrf/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>

namespace hrf::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap cmat(std::span<const double> s, std::size_t rows, std::size_t cols) {
    return {s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<const Eigen::RowVectorXd> crow(std::span<const double> s, std::size_t n) {
    return {s.data(), static_cast<Eigen::Index>(n)};
}

MatMap mmat(Buffer& v, std::size_t offset, std::size_t rows, std::size_t cols) {
    return {v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

// Uninitialized scratch for buffers that are fully overwritten before use.
// Shared so backward closures stay copyable.
using Scratch = std::shared_ptr<double[]>;
Scratch scratch(std::size_t n) {
    return Scratch(new (AlignedAllocator<double>::alignment) double[n],
                   [](double* p) { ::operator delete[](p, AlignedAllocator<double>::alignment); });
}

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
    if (!GradGraph::current().enabled()) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

bool wants(const Tensor& t) { return t.defined() && t.requires_grad(); }

Tensor make(Shape shape, Buffer values, bool tracked) {
    return Tensor::from(std::move(shape), std::move(values), tracked);
}

void record(GradGraph::BackwardFn fn) { GradGraph::current().record(std::move(fn)); }

// Outer/axis/inner decomposition used by the axis-wise operations.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

enum class Broadcast { Same, Trailing };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) return Broadcast::Same;
    if (sb.size() < sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
        return Broadcast::Trailing;
    }
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
    auto in = x.data();
    Buffer out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    Tensor y = make(x.shape(), std::move(out), needs_grad({&x}));
    if (y.requires_grad()) {
        record([x, y, deriv]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto xv = x.data();
            auto yv = y.data();
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
        });
    }
    return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const Broadcast kind = broadcast_kind(a, b, "add");
    auto av = a.data();
    auto bv = b.data();
    Buffer out(av.begin(), av.end());
    const std::size_t nb = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[kind == Broadcast::Same ? i : i % nb];
    Tensor y = make(a.shape(), std::move(out), needs_grad({&a, &b}));
    if (y.requires_grad()) {
        record([a, b, y, nb]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
            }
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("sub: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    auto av = a.data();
    auto bv = b.data();
    Buffer out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    Tensor y = make(a.shape(), std::move(out), needs_grad({&a, &b}));
    if (y.requires_grad()) {
        record([a, b, y]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Broadcast kind = broadcast_kind(a, b, "mul");
    auto av = a.data();
    auto bv = b.data();
    const std::size_t nb = bv.size();
    const bool same = kind == Broadcast::Same;
    Buffer out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[same ? i : i % nb];
    Tensor y = make(a.shape(), std::move(out), needs_grad({&a, &b}));
    if (y.requires_grad()) {
        record([a, b, y, nb, same]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto av = a.data();
            auto bv = b.data();
            if (a.requires_grad()) {
                auto& ga = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[same ? i : i % nb];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[same ? i : i % nb] += g[i] * av[i];
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double v) { return v * factor; },
        [factor](double, double) { return factor; });
}

Tensor mul_prefix(const Tensor& x, const Tensor& w) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    if (sw.size() > sx.size() || !std::equal(sw.begin(), sw.end(), sx.begin())) {
        throw DimensionError("mul_prefix: " + shape_str(sw) + " is not a prefix of " + shape_str(sx));
    }
    const std::size_t groups = w.numel();
    const std::size_t inner = x.numel() / groups;
    auto xv = x.data();
    auto wv = w.data();
    Buffer out(xv.size());
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t i = 0; i < inner; ++i) out[g * inner + i] = xv[g * inner + i] * wv[g];
    }
    Tensor y = make(sx, std::move(out), needs_grad({&x, &w}));
    if (y.requires_grad()) {
        record([x, w, y, groups, inner]() mutable {
            if (!y.has_grad()) return;
            auto gy = y.grad();
            auto xv = x.data();
            auto wv = w.data();
            if (x.requires_grad()) {
                auto& gx = x.grad_buffer();
                for (std::size_t g = 0; g < groups; ++g) {
                    for (std::size_t i = 0; i < inner; ++i) gx[g * inner + i] += gy[g * inner + i] * wv[g];
                }
            }
            if (w.requires_grad()) {
                auto& gw = w.grad_buffer();
                for (std::size_t g = 0; g < groups; ++g) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < inner; ++i) acc += gy[g * inner + i] * xv[g * inner + i];
                    gw[g] += acc;
                }
            }
        });
    }
    return y;
}

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
        [](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double s) { return s * (1.0 - s); });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double t) { return 1.0 - t * t; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                             shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Buffer out(m * n);
    mmat(out, 0, m, n).noalias() = cmat(a.data(), m, k) * cmat(b.data(), k, n);
    Tensor y = make({m, n}, std::move(out), needs_grad({&a, &b}));
    if (y.requires_grad()) {
        record([a, b, y, m, k, n]() mutable {
            if (!y.has_grad()) return;
            auto g = cmat(y.grad(), m, n);
            if (a.requires_grad()) {
                mmat(a.grad_buffer(), 0, m, k).noalias() += g * cmat(b.data(), k, n).transpose();
            }
            if (b.requires_grad()) {
                mmat(b.grad_buffer(), 0, k, n).noalias() += cmat(a.data(), m, k).transpose() * g;
            }
        });
    }
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    }
    const std::size_t in = w.dim(0), outd = w.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    }
    const std::size_t rows = x.numel() / in;
    Buffer out(rows * outd);
    auto ym = mmat(out, 0, rows, outd);
    ym.noalias() = cmat(x.data(), rows, in) * cmat(w.data(), in, outd);
    if (bias.defined()) ym.rowwise() += crow(bias.data(), outd);
    Shape shape = x.shape();
    shape.back() = outd;
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&x, &w, &bias}));
    if (y.requires_grad()) {
        record([x, w, bias, y, rows, in, outd]() mutable {
            if (!y.has_grad()) return;
            auto g = cmat(y.grad(), rows, outd);
            if (x.requires_grad()) {
                mmat(x.grad_buffer(), 0, rows, in).noalias() += g * cmat(w.data(), in, outd).transpose();
            }
            if (w.requires_grad()) {
                mmat(w.grad_buffer(), 0, in, outd).noalias() += cmat(x.data(), rows, in).transpose() * g;
            }
            if (wants(bias)) mmat(bias.grad_buffer(), 0, 1, outd) += g.colwise().sum();
        });
    }
    return y;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
        throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t groups = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    if (bk != k) {
        throw DimensionError("bmm: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t br = transpose_b ? n : k, bc = transpose_b ? k : n;
    Buffer out(groups * m * n);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t g = 0; g < groups; ++g) {
        auto am = cmat(av.subspan(g * m * k, m * k), m, k);
        auto bm = cmat(bv.subspan(g * br * bc, br * bc), br, bc);
        if (transpose_b) {
            mmat(out, g * m * n, m, n).noalias() = am * bm.transpose();
        } else {
            mmat(out, g * m * n, m, n).noalias() = am * bm;
        }
    }
    Tensor y = make({groups, m, n}, std::move(out), needs_grad({&a, &b}));
    if (y.requires_grad()) {
        record([a, b, y, groups, m, k, n, br, bc, transpose_b]() mutable {
            if (!y.has_grad()) return;
            auto gy = y.grad();
            auto av = a.data();
            auto bv = b.data();
            for (std::size_t g = 0; g < groups; ++g) {
                auto gm = cmat(gy.subspan(g * m * n, m * n), m, n);
                auto am = cmat(av.subspan(g * m * k, m * k), m, k);
                auto bm = cmat(bv.subspan(g * br * bc, br * bc), br, bc);
                if (a.requires_grad()) {
                    auto ga = mmat(a.grad_buffer(), g * m * k, m, k);
                    if (transpose_b) {
                        ga.noalias() += gm * bm;
                    } else {
                        ga.noalias() += gm * bm.transpose();
                    }
                }
                if (b.requires_grad()) {
                    auto gb = mmat(b.grad_buffer(), g * br * bc, br, bc);
                    if (transpose_b) {
                        gb.noalias() += gm.transpose() * am;
                    } else {
                        gb.noalias() += am.transpose() * gm;
                    }
                }
            }
        });
    }
    return y;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    auto av = a.data();
    Tensor y = make(std::move(shape), Buffer(av.begin(), av.end()), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return y;
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
    const Shape& in_shape = a.shape();
    const std::size_t rank = in_shape.size();
    if (perm.size() != rank) {
        throw DimensionError("permute: permutation size does not match shape " + shape_str(in_shape));
    }
    std::vector<bool> seen(rank, false);
    for (std::size_t p : perm) {
        if (p >= rank || seen[p]) throw DimensionError("permute: invalid permutation");
        seen[p] = true;
    }
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in_shape[i];
    Shape out_shape(rank);
    std::vector<std::size_t> src_strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[perm[i]];
        src_strides[i] = in_strides[perm[i]];
    }
    // map[o] = source flat index of output element o.
    const std::size_t total = a.numel();
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
        map[o] = src;
        for (std::size_t d = rank; d-- > 0;) {
            ++counter[d];
            src += src_strides[d];
            if (counter[d] < out_shape[d]) break;
            src -= src_strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    auto av = a.data();
    Buffer out(total);
    for (std::size_t o = 0; o < total; ++o) out[o] = av[map[o]];
    Tensor y = make(std::move(out_shape), std::move(out), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y, map = std::move(map)]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t o = 0; o < g.size(); ++o) ga[map[o]] += g[o];
        });
    }
    return y;
}

Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
    std::vector<std::size_t> perm(a.rank());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    if (axis0 >= perm.size() || axis1 >= perm.size()) {
        throw DimensionError("transpose: axis out of range for " + shape_str(a.shape()));
    }
    std::swap(perm[axis0], perm[axis1]);
    return permute(a, perm);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    const AxisSplit s = split_at(a.shape(), axis);
    if (length == 0 || start + length > s.extent) {
        throw DimensionError("slice: range [" + std::to_string(start) + "," +
                             std::to_string(start + length) + ") out of bounds for axis " +
                             std::to_string(axis) + " of " + shape_str(a.shape()));
    }
    Shape shape = a.shape();
    shape[axis] = length;
    auto av = a.data();
    Buffer out(s.outer * length * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = av.data() + (o * s.extent + start) * s.inner;
        std::copy(src, src + length * s.inner, out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
    }
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y, s, start, length]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t i = 0; i < length * s.inner; ++i) {
                    ga[(o * s.extent + start) * s.inner + i] += g[o * length * s.inner + i];
                }
            }
        });
    }
    return y;
}

Tensor select(const Tensor& a, std::size_t axis, std::size_t index) {
    Tensor sliced = slice(a, axis, index, 1);
    Shape shape = a.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (shape.empty()) shape.push_back(1);
    return reshape(sliced, std::move(shape));
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("stack: no tensors given");
    const Shape& base = parts.front().shape();
    for (const Tensor& p : parts) {
        if (p.shape() != base) {
            throw DimensionError("stack: shape " + shape_str(p.shape()) + " differs from " + shape_str(base));
        }
    }
    if (axis > base.size()) throw DimensionError("stack: axis out of range");
    Shape shape = base;
    shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), parts.size());
    const AxisSplit s = split_at(shape, axis);
    Buffer out(shape_numel(shape));
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto pv = parts[p].data();
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::copy(pv.begin() + static_cast<std::ptrdiff_t>(o * s.inner),
                      pv.begin() + static_cast<std::ptrdiff_t>((o + 1) * s.inner),
                      out.begin() + static_cast<std::ptrdiff_t>((o * s.extent + p) * s.inner));
        }
    }
    bool tracked = false;
    if (GradGraph::current().enabled()) {
        tracked = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
    }
    Tensor y = make(std::move(shape), std::move(out), tracked);
    if (tracked) {
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        record([inputs = std::move(inputs), y, s]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            for (std::size_t p = 0; p < inputs.size(); ++p) {
                if (!inputs[p].requires_grad()) continue;
                auto& gp = inputs[p].grad_buffer();
                for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t i = 0; i < s.inner; ++i) {
                        gp[o * s.inner + i] += g[(o * s.extent + p) * s.inner + i];
                    }
                }
            }
        });
    }
    return y;
}

Tensor mean(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_at(a.shape(), axis);
    Shape shape = a.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (shape.empty()) shape.push_back(1);
    auto av = a.data();
    Buffer out(s.outer * s.inner, 0.0);
    const double inv = 1.0 / static_cast<double>(s.extent);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t e = 0; e < s.extent; ++e) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                out[o * s.inner + i] += av[(o * s.extent + e) * s.inner + i];
            }
        }
    }
    for (double& v : out) v *= inv;
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y, s, inv]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t e = 0; e < s.extent; ++e) {
                    for (std::size_t i = 0; i < s.inner; ++i) {
                        ga[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i] * inv;
                    }
                }
            }
        });
    }
    return y;
}

Tensor pad_replicate_last(const Tensor& a, std::size_t length) {
    const std::size_t n = a.shape().back();
    if (length < n) {
        throw DimensionError("pad_replicate_last: target length " + std::to_string(length) +
                             " is shorter than " + shape_str(a.shape()));
    }
    const std::size_t rows = a.numel() / n;
    auto av = a.data();
    Buffer out(rows * length);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < length; ++t) out[r * length + t] = av[r * n + std::min(t, n - 1)];
    }
    Shape shape = a.shape();
    shape.back() = length;
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y, rows, n, length]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t t = 0; t < length; ++t) ga[r * n + std::min(t, n - 1)] += g[r * length + t];
            }
        });
    }
    return y;
}

Tensor pad_zeros_last(const Tensor& a, std::size_t length) {
    const std::size_t n = a.shape().back();
    if (length < n) {
        throw DimensionError("pad_zeros_last: target length " + std::to_string(length) + " is shorter than " +
                             shape_str(a.shape()));
    }
    const std::size_t rows = a.numel() / n;
    auto av = a.data();
    Buffer out(rows * length, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.data() + r * n, n, out.data() + r * length);
    }
    Shape shape = a.shape();
    shape.back() = length;
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y, rows, n, length]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t t = 0; t < n; ++t) ga[r * n + t] += g[r * length + t];
            }
        });
    }
    return y;
}

Tensor gather_columns(const Tensor& a, const std::vector<std::vector<std::size_t>>& indices) {
    if (a.rank() != 2 || indices.size() != a.dim(0) || indices.empty()) {
        throw DimensionError("gather_columns: index rows do not match " + shape_str(a.shape()));
    }
    const std::size_t rows = a.dim(0), cols = a.dim(1), k = indices.front().size();
    Buffer out(rows * k);
    auto av = a.data();
    for (std::size_t r = 0; r < rows; ++r) {
        if (indices[r].size() != k) throw DimensionError("gather_columns: ragged index rows");
        for (std::size_t j = 0; j < k; ++j) {
            if (indices[r][j] >= cols) throw DimensionError("gather_columns: column index out of range");
            out[r * k + j] = av[r * cols + indices[r][j]];
        }
    }
    Tensor y = make({rows, k}, std::move(out), needs_grad({&a}));
    if (y.requires_grad()) {
        record([a, y, indices, rows, cols, k]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto& ga = a.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < k; ++j) ga[r * cols + indices[r][j]] += g[r * k + j];
            }
        });
    }
    return y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_at(x.shape(), axis);
    auto xv = x.data();
    Buffer out(xv.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = xv[base];
            for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, xv[base + e * s.inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                const double v = std::exp(xv[base + e * s.inner] - mx);
                out[base + e * s.inner] = v;
                total += v;
            }
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
        }
    }
    Tensor y = make(x.shape(), std::move(out), needs_grad({&x}));
    if (y.requires_grad()) {
        record([x, y, s]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto yv = y.data();
            auto& gx = x.grad_buffer();
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = o * s.extent * s.inner + i;
                    double dot = 0.0;
                    for (std::size_t e = 0; e < s.extent; ++e) {
                        dot += g[base + e * s.inner] * yv[base + e * s.inner];
                    }
                    for (std::size_t e = 0; e < s.extent; ++e) {
                        const std::size_t idx = base + e * s.inner;
                        gx[idx] += yv[idx] * (g[idx] - dot);
                    }
                }
            }
        });
    }
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t width = x.shape().back();
    if (gamma.numel() != width || beta.numel() != width) {
        throw DimensionError("layer_norm: gamma/beta do not match last axis of " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / width;
    auto xv = x.data();
    auto gv = gamma.data();
    auto bv = beta.data();
    Buffer out(xv.size());
    Buffer xhat(xv.size());
    Buffer inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * width;
        double mu = 0.0;
        for (std::size_t j = 0; j < width; ++j) mu += row[j];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(width);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < width; ++j) {
            const double h = (row[j] - mu) * inv_std[r];
            xhat[r * width + j] = h;
            out[r * width + j] = h * gv[j] + bv[j];
        }
    }
    Tensor y = make(x.shape(), std::move(out), needs_grad({&x, &gamma, &beta}));
    if (y.requires_grad()) {
        record([x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, width]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto gv = gamma.data();
            if (gamma.requires_grad()) {
                auto& gg = gamma.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * xhat[i];
            }
            if (beta.requires_grad()) {
                auto& gb = beta.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
            }
            if (x.requires_grad()) {
                auto& gx = x.grad_buffer();
                const double inv_w = 1.0 / static_cast<double>(width);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_d = 0.0, mean_dh = 0.0;
                    for (std::size_t j = 0; j < width; ++j) {
                        const double d = g[r * width + j] * gv[j];
                        mean_d += d;
                        mean_dh += d * xhat[r * width + j];
                    }
                    mean_d *= inv_w;
                    mean_dh *= inv_w;
                    for (std::size_t j = 0; j < width; ++j) {
                        const double d = g[r * width + j] * gv[j];
                        gx[r * width + j] += inv_std[r] * (d - mean_d - xhat[r * width + j] * mean_dh);
                    }
                }
            }
        });
    }
    return y;
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape()) {
        throw DimensionError("mse_loss: prediction " + shape_str(prediction.shape()) +
                             " does not match target " + shape_str(target.shape()));
    }
    auto pv = prediction.data();
    auto tv = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
    const double n = static_cast<double>(pv.size());
    Tensor y = make({1}, {total / n}, needs_grad({&prediction, &target}));
    if (y.requires_grad()) {
        record([prediction, target, y, n]() mutable {
            if (!y.has_grad()) return;
            const double g = y.grad()[0] * 2.0 / n;
            auto pv = prediction.data();
            auto tv = target.data();
            if (prediction.requires_grad()) {
                auto& gp = prediction.grad_buffer();
                for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * (pv[i] - tv[i]);
            }
            if (target.requires_grad()) {
                auto& gt = target.grad_buffer();
                for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= g * (pv[i] - tv[i]);
            }
        });
    }
    return y;
}

Tensor conv1d_dilated(const Tensor& x, const Tensor& kernel, std::size_t dilation, bool causal_padding) {
    return conv1d_dilated(x, kernel, Tensor{}, dilation, causal_padding);
}

Tensor conv1d_dilated(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t dilation,
                      bool causal_padding) {
    if (x.rank() != 2 && x.rank() != 3) {
        throw DimensionError("conv1d_dilated: input must be [C,T] or [B,C,T], got " + shape_str(x.shape()));
    }
    if (kernel.rank() != 3) {
        throw DimensionError("conv1d_dilated: kernel must be [O,C,k], got " + shape_str(kernel.shape()));
    }
    if (dilation == 0) throw InputError("conv1d_dilated: dilation must be >= 1");
    const bool batched = x.rank() == 3;
    const std::size_t batch = batched ? x.dim(0) : 1;
    const std::size_t channels = x.dim(batched ? 1 : 0);
    const std::size_t len = x.dim(batched ? 2 : 1);
    const std::size_t out_ch = kernel.dim(0), taps = kernel.dim(2);
    if (kernel.dim(1) != channels) {
        throw DimensionError("conv1d_dilated: kernel " + shape_str(kernel.shape()) +
                             " does not match input channels of " + shape_str(x.shape()));
    }
    if (bias.defined() && bias.numel() != out_ch) {
        throw DimensionError("conv1d_dilated: bias " + shape_str(bias.shape()) + " does not match kernel " +
                             shape_str(kernel.shape()));
    }
    const std::size_t reach = (taps - 1) * dilation;
    if (!causal_padding && reach >= len) {
        throw DimensionError("conv1d_dilated: input length " + std::to_string(len) +
                             " too short for valid convolution");
    }
    const std::size_t out_len = causal_padding ? len : len - reach;
    // Output t reads x[t + offset - (taps-1-j)*dilation]; offset is reach for valid mode.
    const std::size_t offset = causal_padding ? 0 : reach;
    const std::size_t ck = channels * taps;
    const std::size_t rows = batch * out_len;

    // im2col: cols[(b,t), (c,j)] = x[b,c,t + offset - (taps-1-j)*dilation] or 0.
    auto xv = x.data();
    Buffer cols(rows * ck, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            double* row = cols.data() + (b * out_len + t) * ck;
            for (std::size_t c = 0; c < channels; ++c) {
                const double* src = xv.data() + (b * channels + c) * len;
                for (std::size_t j = 0; j < taps; ++j) {
                    const std::size_t back = (taps - 1 - j) * dilation;
                    if (t + offset >= back) row[c * taps + j] = src[t + offset - back];
                }
            }
        }
    }
    Buffer tmp(rows * out_ch);
    auto tm = mmat(tmp, 0, rows, out_ch);
    tm.noalias() = cmat(cols, rows, ck) * cmat(kernel.data(), out_ch, ck).transpose();
    if (bias.defined()) tm.rowwise() += crow(bias.data(), out_ch);
    Buffer out(batch * out_ch * out_len);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t o = 0; o < out_ch; ++o) {
                out[(b * out_ch + o) * out_len + t] = tmp[(b * out_len + t) * out_ch + o];
            }
        }
    }
    Shape shape = batched ? Shape{batch, out_ch, out_len} : Shape{out_ch, out_len};
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&x, &kernel, &bias}));
    if (y.requires_grad()) {
        record([x, kernel, bias, y, cols = std::move(cols), batch, channels, len, out_ch, taps, dilation,
                out_len, offset, ck, rows]() mutable {
            if (!y.has_grad()) return;
            auto gy = y.grad();
            Buffer g2(rows * out_ch);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < out_ch; ++o) {
                    for (std::size_t t = 0; t < out_len; ++t) {
                        g2[(b * out_len + t) * out_ch + o] = gy[(b * out_ch + o) * out_len + t];
                    }
                }
            }
            auto gm = cmat(g2, rows, out_ch);
            if (kernel.requires_grad()) {
                mmat(kernel.grad_buffer(), 0, out_ch, ck).noalias() += gm.transpose() * cmat(cols, rows, ck);
            }
            if (wants(bias)) mmat(bias.grad_buffer(), 0, 1, out_ch) += gm.colwise().sum();
            if (x.requires_grad()) {
                Buffer dcols(rows * ck);
                mmat(dcols, 0, rows, ck).noalias() = gm * cmat(kernel.data(), out_ch, ck);
                auto& gx = x.grad_buffer();
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t t = 0; t < out_len; ++t) {
                        const double* row = dcols.data() + (b * out_len + t) * ck;
                        for (std::size_t c = 0; c < channels; ++c) {
                            double* dst = gx.data() + (b * channels + c) * len;
                            for (std::size_t j = 0; j < taps; ++j) {
                                const std::size_t back = (taps - 1 - j) * dilation;
                                if (t + offset >= back) dst[t + offset - back] += row[c * taps + j];
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

Tensor grid_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                   std::span<const std::size_t> periods, std::span<const std::size_t> lengths) {
    if (x.rank() != 3) throw DimensionError("grid_conv2d: input must be [B,C,T], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), channels = x.dim(1), span_len = x.dim(2);
    if (kernel.rank() != 4 || kernel.dim(1) != channels || kernel.dim(2) != 3 || kernel.dim(3) != 3) {
        throw DimensionError("grid_conv2d: kernel " + shape_str(kernel.shape()) + " does not match input " +
                             shape_str(x.shape()));
    }
    const std::size_t out_ch = kernel.dim(0);
    if (bias.defined() && bias.numel() != out_ch) throw DimensionError("grid_conv2d: bias size mismatch");
    if (periods.size() != batch || lengths.size() != batch) {
        throw DimensionError("grid_conv2d: need one period and one length per batch row");
    }
    for (std::size_t b = 0; b < batch; ++b) {
        if (periods[b] == 0 || lengths[b] > span_len || lengths[b] % periods[b] != 0) {
            throw DimensionError("grid_conv2d: length " + std::to_string(lengths[b]) +
                                 " is not a whole number of periods of " + std::to_string(periods[b]));
        }
    }
    const std::size_t ck = channels * 9;
    const std::size_t rows = batch * span_len;
    // source[(b,s), tap] = flat offset into x's time axis or npos.
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> source(rows * 9, npos);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t p = periods[b];
        const std::size_t grid_rows = lengths[b] / p;
        for (std::size_t s = 0; s < lengths[b]; ++s) {
            const std::size_t r = s / p, c = s % p;
            for (std::size_t dr = 0; dr < 3; ++dr) {
                for (std::size_t dc = 0; dc < 3; ++dc) {
                    if (r + dr < 1 || r + dr - 1 >= grid_rows || c + dc < 1 || c + dc - 1 >= p) continue;
                    source[(b * span_len + s) * 9 + dr * 3 + dc] = (r + dr - 1) * p + (c + dc - 1);
                }
            }
        }
    }
    auto xv = x.data();
    Buffer cols(rows * ck, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < lengths[b]; ++s) {
            double* row = cols.data() + (b * span_len + s) * ck;
            const std::size_t* src = source.data() + (b * span_len + s) * 9;
            for (std::size_t c = 0; c < channels; ++c) {
                const double* xc = xv.data() + (b * channels + c) * span_len;
                for (std::size_t tap = 0; tap < 9; ++tap) {
                    if (src[tap] != npos) row[c * 9 + tap] = xc[src[tap]];
                }
            }
        }
    }
    Buffer tmp(rows * out_ch);
    auto tm = mmat(tmp, 0, rows, out_ch);
    tm.noalias() = cmat(cols, rows, ck) * cmat(kernel.data(), out_ch, ck).transpose();
    if (bias.defined()) tm.rowwise() += crow(bias.data(), out_ch);
    Buffer out(batch * out_ch * span_len, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < lengths[b]; ++s) {
            for (std::size_t o = 0; o < out_ch; ++o) {
                out[(b * out_ch + o) * span_len + s] = tmp[(b * span_len + s) * out_ch + o];
            }
        }
    }
    std::vector<std::size_t> len_copy(lengths.begin(), lengths.end());
    Tensor y = make({batch, out_ch, span_len}, std::move(out), needs_grad({&x, &kernel, &bias}));
    if (y.requires_grad()) {
        record([x, kernel, bias, y, cols = std::move(cols), source = std::move(source),
                len_copy = std::move(len_copy), batch, channels, span_len, out_ch, ck, rows]() mutable {
            if (!y.has_grad()) return;
            auto gy = y.grad();
            Buffer g2(rows * out_ch, 0.0);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < out_ch; ++o) {
                    for (std::size_t s = 0; s < len_copy[b]; ++s) {
                        g2[(b * span_len + s) * out_ch + o] = gy[(b * out_ch + o) * span_len + s];
                    }
                }
            }
            auto gm = cmat(g2, rows, out_ch);
            if (kernel.requires_grad()) {
                mmat(kernel.grad_buffer(), 0, out_ch, ck).noalias() += gm.transpose() * cmat(cols, rows, ck);
            }
            if (wants(bias)) mmat(bias.grad_buffer(), 0, 1, out_ch) += gm.colwise().sum();
            if (x.requires_grad()) {
                Buffer dcols(rows * ck);
                mmat(dcols, 0, rows, ck).noalias() = gm * cmat(kernel.data(), out_ch, ck);
                auto& gx = x.grad_buffer();
                for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t s = 0; s < len_copy[b]; ++s) {
                        const double* row = dcols.data() + (b * span_len + s) * ck;
                        const std::size_t* src = source.data() + (b * span_len + s) * 9;
                        for (std::size_t c = 0; c < channels; ++c) {
                            double* gc = gx.data() + (b * channels + c) * span_len;
                            for (std::size_t tap = 0; tap < 9; ++tap) {
                                if (src[tap] != npos) gc[src[tap]] += row[c * 9 + tap];
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

namespace {

// [n, 2*bins] basis [cos | sin] with angle 2 pi k t / n, reduced mod n for accuracy.
const RowMatrix& dft_basis(std::size_t n) {
    thread_local std::map<std::size_t, RowMatrix> cache;
    auto [it, inserted] = cache.try_emplace(n);
    if (inserted) {
        const std::size_t bins = n / 2 + 1;
        RowMatrix& m = it->second;
        m.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * bins));
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t k = 0; k < bins; ++k) {
                const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
                m(Eigen::Index(t), Eigen::Index(k)) = std::cos(angle);
                m(Eigen::Index(t), Eigen::Index(bins + k)) = std::sin(angle);
            }
        }
    }
    return it->second;
}

}  // namespace

Tensor rfft_magnitudes(const Tensor& x) {
    if (x.rank() > 2) throw DimensionError("rfft_magnitudes: expected [n] or [R,n], got " + shape_str(x.shape()));
    const std::size_t n = x.shape().back();
    if (n < 2) throw InputError("rfft_magnitudes needs at least 2 samples");
    const std::size_t rows = x.numel() / n;
    const std::size_t bins = n / 2 + 1;
    // Many short rows: one GEMM against the DFT basis beats per-row FFTs here.
    // spectra holds [Re | -Im] per row.
    const RowMatrix& basis = dft_basis(n);
    auto spectra = std::make_shared<RowMatrix>(cmat(x.data(), rows, n) * basis);
    Buffer out(rows * bins);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < bins; ++k) {
            out[r * bins + k] = std::hypot((*spectra)(Eigen::Index(r), Eigen::Index(k)),
                                           (*spectra)(Eigen::Index(r), Eigen::Index(bins + k)));
        }
    }
    Shape shape = x.shape();
    shape.back() = bins;
    Tensor y = make(std::move(shape), std::move(out), needs_grad({&x}));
    if (y.requires_grad()) {
        record([x, y, spectra, rows, n, bins]() mutable {
            if (!y.has_grad()) return;
            auto g = y.grad();
            auto mags = y.data();
            // d|X_k|/dx_t = (Re_k cos + (-Im_k) sin) / |X_k|, so the gradient is the
            // spectrum scaled by g/|X| projected back through the same basis.
            RowMatrix scaled(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(2 * bins));
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t k = 0; k < bins; ++k) {
                    const double m = mags[r * bins + k];
                    const double f = m > 1e-300 ? g[r * bins + k] / m : 0.0;
                    scaled(Eigen::Index(r), Eigen::Index(k)) = f * (*spectra)(Eigen::Index(r), Eigen::Index(k));
                    scaled(Eigen::Index(r), Eigen::Index(bins + k)) =
                        f * (*spectra)(Eigen::Index(r), Eigen::Index(bins + k));
                }
            }
            mmat(x.grad_buffer(), 0, rows, n).noalias() += scaled * dft_basis(n).transpose();
        });
    }
    return y;
}

LstmState lstm_cell(const Tensor& gates, const Tensor& c_prev) {
    if (gates.rank() != 2 || c_prev.rank() != 2 || gates.dim(0) != c_prev.dim(0) ||
        gates.dim(1) != 4 * c_prev.dim(1)) {
        throw DimensionError("lstm_cell: gates " + shape_str(gates.shape()) + " do not match state " +
                             shape_str(c_prev.shape()));
    }
    const std::size_t batch = c_prev.dim(0), hidden = c_prev.dim(1);
    auto gv = gates.data();
    auto cp = c_prev.data();
    // act holds the activated gates (i, f, g, o) in the same layout as `gates`.
    Buffer act(gv.size());
    Buffer h(batch * hidden), c(batch * hidden), tanh_c(batch * hidden);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = gv.data() + b * 4 * hidden;
        double* a = act.data() + b * 4 * hidden;
        for (std::size_t j = 0; j < hidden; ++j) {
            a[j] = sig(row[j]);
            a[hidden + j] = sig(row[hidden + j]);
            a[2 * hidden + j] = std::tanh(row[2 * hidden + j]);
            a[3 * hidden + j] = sig(row[3 * hidden + j]);
            const std::size_t idx = b * hidden + j;
            c[idx] = a[hidden + j] * cp[idx] + a[j] * a[2 * hidden + j];
            tanh_c[idx] = std::tanh(c[idx]);
            h[idx] = a[3 * hidden + j] * tanh_c[idx];
        }
    }
    const bool tracked = needs_grad({&gates, &c_prev});
    LstmState state{make({batch, hidden}, std::move(h), tracked), make({batch, hidden}, std::move(c), tracked)};
    if (tracked) {
        record([gates, c_prev, hs = state.h, cs = state.c, act = std::move(act), tanh_c = std::move(tanh_c), batch,
                hidden]() mutable {
            if (!hs.has_grad() && !cs.has_grad()) return;
            auto dh = hs.grad();
            auto dc = cs.grad();
            auto cp = c_prev.data();
            Buffer* gg = gates.requires_grad() ? &gates.grad_buffer() : nullptr;
            Buffer* gc = c_prev.requires_grad() ? &c_prev.grad_buffer() : nullptr;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* a = act.data() + b * 4 * hidden;
                for (std::size_t j = 0; j < hidden; ++j) {
                    const std::size_t idx = b * hidden + j;
                    const double i_g = a[j], f_g = a[hidden + j], c_g = a[2 * hidden + j], o_g = a[3 * hidden + j];
                    const double dh_v = dh.empty() ? 0.0 : dh[idx];
                    double dc_v = dc.empty() ? 0.0 : dc[idx];
                    dc_v += dh_v * o_g * (1.0 - tanh_c[idx] * tanh_c[idx]);
                    if (gg != nullptr) {
                        double* d = gg->data() + b * 4 * hidden;
                        d[j] += dc_v * c_g * i_g * (1.0 - i_g);
                        d[hidden + j] += dc_v * cp[idx] * f_g * (1.0 - f_g);
                        d[2 * hidden + j] += dc_v * i_g * (1.0 - c_g * c_g);
                        d[3 * hidden + j] += dh_v * tanh_c[idx] * o_g * (1.0 - o_g);
                    }
                    if (gc != nullptr) (*gc)[idx] += dc_v * f_g;
                }
            }
        });
    }
    return state;
}

Tensor lstm_layer(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias) {
    if (x.rank() != 3 || w_ih.rank() != 2 || w_hh.rank() != 2 || w_ih.dim(0) != x.dim(2) ||
        w_hh.dim(1) != w_ih.dim(1) || w_hh.dim(1) != 4 * w_hh.dim(0) || bias.numel() != w_ih.dim(1)) {
        throw DimensionError("lstm_layer: input " + shape_str(x.shape()) + " does not match weights " +
                             shape_str(w_ih.shape()) + ", " + shape_str(w_hh.shape()));
    }
    using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Strided = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
    using MutStrided = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
    const std::size_t batch = x.dim(0), steps = x.dim(1), in = x.dim(2), hidden = w_hh.dim(0), g4 = 4 * hidden;
    const auto B = static_cast<Eigen::Index>(batch), Hd = static_cast<Eigen::Index>(hidden);

    // Input contributions for every timestep at once; row b*T+t.
    Scratch xp = scratch(batch * steps * g4);
    MatMap(xp.get(), Eigen::Index(batch * steps), Eigen::Index(g4)).noalias() = cmat(x.data(), batch * steps, in) * cmat(w_ih.data(), in, g4);
    MatMap(xp.get(), Eigen::Index(batch * steps), Eigen::Index(g4)).rowwise() += crow(bias.data(), g4);

    Buffer out(batch * steps * hidden);
    Scratch acts = scratch(steps * batch * g4), cells = scratch(steps * batch * hidden),
            tanh_c = scratch(steps * batch * hidden);
    RowMatrix h_prev = RowMatrix::Zero(B, Hd);
    Array c_prev = Array::Zero(B, Hd);
    RowMatrix gates(B, static_cast<Eigen::Index>(g4));
    for (std::size_t t = 0; t < steps; ++t) {
        gates.noalias() = Strided(xp.get() + t * g4, B, Eigen::Index(g4), Eigen::OuterStride<>(Eigen::Index(steps * g4)));
        gates.noalias() += h_prev * cmat(w_hh.data(), hidden, g4);
        Eigen::Map<Array> a(acts.get() + t * batch * g4, B, Eigen::Index(g4));
        // Gates (i, f, g, o): sigmoid everywhere, then tanh(z) = 2 sigmoid(2z) - 1 for g.
        a = (1.0 + (-gates.array()).exp()).inverse();
        a.middleCols(2 * Hd, Hd) = 2.0 / (1.0 + (-2.0 * gates.array().middleCols(2 * Hd, Hd)).exp()) - 1.0;
        Eigen::Map<Array> c(cells.get() + t * batch * hidden, B, Hd);
        Eigen::Map<Array> tc(tanh_c.get() + t * batch * hidden, B, Hd);
        c = a.middleCols(Hd, Hd) * c_prev + a.leftCols(Hd) * a.middleCols(2 * Hd, Hd);
        tc = 2.0 / (1.0 + (-2.0 * c).exp()) - 1.0;
        h_prev = (a.rightCols(Hd) * tc).matrix();
        MutStrided(out.data() + t * hidden, B, Hd, Eigen::OuterStride<>(Eigen::Index(steps * hidden))) = h_prev;
        c_prev = c;
    }

    Tensor y = make({batch, steps, hidden}, std::move(out), needs_grad({&x, &w_ih, &w_hh, &bias}));
    if (y.requires_grad()) {
        record([x, w_ih, w_hh, bias, y, acts = std::move(acts), cells = std::move(cells), tanh_c = std::move(tanh_c),
                batch, steps, in, hidden, g4, B, Hd]() mutable {
            if (!y.has_grad()) return;
            const auto gy = y.grad();
            const auto hv = y.data();
            Scratch dxp = scratch(batch * steps * g4);
            RowMatrix dh_rec = RowMatrix::Zero(B, Hd);
            Array dc_next = Array::Zero(B, Hd);
            RowMatrix dgates(B, Eigen::Index(g4));
            const bool want_whh = w_hh.requires_grad();
            RowMatrix dw_hh = RowMatrix::Zero(Hd, Eigen::Index(g4));
            for (std::size_t t = steps; t-- > 0;) {
                const Eigen::Map<const Array> a(acts.get() + t * batch * g4, B, Eigen::Index(g4));
                const Eigen::Map<const Array> tc(tanh_c.get() + t * batch * hidden, B, Hd);
                const Array dh = Strided(gy.data() + t * hidden, B, Hd, Eigen::OuterStride<>(Eigen::Index(steps * hidden)))
                                     .array() +
                                 dh_rec.array();
                const auto i_g = a.leftCols(Hd), f_g = a.middleCols(Hd, Hd), c_g = a.middleCols(2 * Hd, Hd),
                           o_g = a.rightCols(Hd);
                const Array dc = dc_next + dh * o_g * (1.0 - tc.square());
                auto dg = dgates.array();
                dg.leftCols(Hd) = dc * c_g * i_g * (1.0 - i_g);
                if (t > 0) {
                    const Eigen::Map<const Array> cp(cells.get() + (t - 1) * batch * hidden, B, Hd);
                    dg.middleCols(Hd, Hd) = dc * cp * f_g * (1.0 - f_g);
                } else {
                    dg.middleCols(Hd, Hd).setZero();
                }
                dg.middleCols(2 * Hd, Hd) = dc * i_g * (1.0 - c_g.square());
                dg.rightCols(Hd) = dh * tc * o_g * (1.0 - o_g);
                dc_next = dc * f_g;
                MutStrided(dxp.get() + t * g4, B, Eigen::Index(g4), Eigen::OuterStride<>(Eigen::Index(steps * g4))) =
                    dgates;
                if (t > 0) {
                    const Strided h_before(hv.data() + (t - 1) * hidden, B, Hd,
                                           Eigen::OuterStride<>(Eigen::Index(steps * hidden)));
                    if (want_whh) dw_hh.noalias() += h_before.transpose() * dgates;
                    dh_rec.noalias() = dgates * cmat(w_hh.data(), hidden, g4).transpose();
                }
            }
            const ConstMatMap dxp_m(dxp.get(), Eigen::Index(batch * steps), Eigen::Index(g4));
            if (want_whh) mmat(w_hh.grad_buffer(), 0, hidden, g4) += dw_hh;
            if (w_ih.requires_grad()) {
                mmat(w_ih.grad_buffer(), 0, in, g4).noalias() += cmat(x.data(), batch * steps, in).transpose() * dxp_m;
            }
            if (wants(bias)) mmat(bias.grad_buffer(), 0, 1, g4) += dxp_m.colwise().sum();
            if (x.requires_grad()) {
                mmat(x.grad_buffer(), 0, batch * steps, in).noalias() += dxp_m * cmat(w_ih.data(), in, g4).transpose();
            }
        });
    }
    return y;
}

Attention scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
        throw DimensionError("scaled_dot_attention: expected [h,n,d] tensors");
    }
    if (q.dim(0) != k.dim(0) || q.dim(0) != v.dim(0) || q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1)) {
        throw DimensionError("scaled_dot_attention: mismatched heads or key dims for q " + shape_str(q.shape()) +
                             ", k " + shape_str(k.shape()) + ", v " + shape_str(v.shape()));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(2)));
    Tensor scores = scale(bmm(q, k, /*transpose_b=*/true), inv_sqrt_d);
    Tensor weights = softmax(scores, 2);
    return {bmm(weights, v), weights};
}

}  // namespace hrf::ops
