#include "hrf/tensor.hpp"

#include "hrf/errors.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

namespace hrf {

std::size_t shape_numel(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
    return from(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::from(Shape shape, Buffer values, bool requires_grad) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(impl_->shape));
    }
    return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
    if (impl_->data.size() != 1) {
        throw DimensionError("item() requires a single-element tensor, got " + shape_str(impl_->shape));
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

std::span<const double> Tensor::grad() const { return impl_->grad; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

Buffer& Tensor::grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

GradGraph& GradGraph::current() {
    thread_local GradGraph graph;
    return graph;
}

void GradGraph::record(BackwardFn backward) { nodes_.push_back(std::move(backward)); }

void GradGraph::backward(Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    }
    loss.grad_buffer()[0] += 1.0;
    visits_ = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        (*it)();
        ++visits_;
    }
    nodes_.clear();
}

NoGradGuard::NoGradGuard() : previous_(GradGraph::current().enabled_) {
    GradGraph::current().enabled_ = false;
}

NoGradGuard::~NoGradGuard() { GradGraph::current().enabled_ = previous_; }

void backward(Tensor& loss) { GradGraph::current().backward(loss); }

}  // namespace hrf
