#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace hrf {

using Shape = std::vector<std::size_t>;

/// Allocates on 64-byte boundaries. Vectorized kernels peel scalar heads up to
/// the first aligned address, so fixed alignment keeps results bit-identical
/// from run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};
    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), alignment); }
    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

[[nodiscard]] std::size_t shape_numel(const Shape& shape) noexcept;
[[nodiscard]] std::string shape_str(const Shape& shape);

/**
 * Dense row-major tensor of doubles.
 *
 * A Tensor is a cheap handle: copies alias the same storage. Values are
 * produced by the functions in ops.hpp, which record a backward rule on the
 * calling thread's GradGraph whenever any input requires a gradient.
 */
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, Buffer values, bool requires_grad = false);
    static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    [[nodiscard]] bool defined() const noexcept { return impl_ != nullptr; }
    [[nodiscard]] const Shape& shape() const;
    [[nodiscard]] std::size_t dim(std::size_t axis) const;
    [[nodiscard]] std::size_t rank() const { return shape().size(); }
    [[nodiscard]] std::size_t numel() const;

    [[nodiscard]] std::span<const double> data() const;
    [[nodiscard]] std::span<double> mutable_data();
    [[nodiscard]] double item() const;
    [[nodiscard]] double at(std::size_t flat_index) const { return data()[flat_index]; }

    [[nodiscard]] bool requires_grad() const;
    void set_requires_grad(bool flag);

    /// Empty span until a backward pass (or `grad_buffer`) allocates it.
    [[nodiscard]] std::span<const double> grad() const;
    [[nodiscard]] bool has_grad() const;
    /// Allocates a zero gradient on first use.
    Buffer& grad_buffer() const;
    void zero_grad();

    /// Copy of the values with no gradient and no graph attachment.
    [[nodiscard]] Tensor detach() const;

    [[nodiscard]] bool same_storage(const Tensor& other) const noexcept {
        return impl_ == other.impl_;
    }

  private:
    struct Impl {
        Shape shape;
        Buffer data;
        Buffer grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

/**
 * Tape of differentiable operations recorded on one thread.
 *
 * Nodes are appended in execution order, so the tape is already a
 * topological order; `backward` walks it once in reverse and then clears it.
 */
class GradGraph {
  public:
    using BackwardFn = std::function<void()>;

    /// The graph for the calling thread.
    static GradGraph& current();

    void record(BackwardFn backward);
    void backward(Tensor& loss);
    void reset() { nodes_.clear(); }

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    /// Number of node visits made by the most recent backward call.
    [[nodiscard]] std::size_t last_backward_visits() const noexcept { return visits_; }

    [[nodiscard]] bool enabled() const noexcept { return enabled_; }

  private:
    friend class NoGradGuard;
    std::vector<BackwardFn> nodes_;
    std::size_t visits_ = 0;
    bool enabled_ = true;
};

/// Disables recording on the current thread for the guard's lifetime.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Seeds d(loss)/d(loss) = 1 and runs the current thread's graph backwards.
void backward(Tensor& loss);

}  // namespace hrf
