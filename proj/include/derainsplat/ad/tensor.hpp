#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding row-major values and, once a
// backward pass has reached it, a gradient buffer of the same shape. Ops
// executed while a Tape is active on the current thread (see TapeScope) and
// touching at least one tensor that requires grad record a backward closure
// on that tape. Tape::backward replays the closures in exact reverse order.
//
// Values are treated as immutable once a tensor has been used as an op input;
// only parameter leaves are written in place (by the optimizer, between tapes).

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace drs::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    bool leaf = true;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const { return node_->value.size(); }

    std::span<const double> values() const { return node_->value; }
    /// In-place access for parameter leaves; never call on a tensor a live tape depends on.
    std::span<double> mutable_values() { return node_->value; }
    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }

    Tensor& set_requires_grad(bool on = true);
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool is_leaf() const noexcept { return !node_ || node_->leaf; }

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    void clear_grad() { node_->grad.clear(); }

    /// Fresh leaf holding a copy of the values; no grad history.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

/// Ordered record of executed differentiable ops. Single use: a second
/// backward() throws std::logic_error.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(BackwardFn fn) { ops_.push_back(std::move(fn)); }

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
    /// The loss must hold exactly one element.
    void backward(const Tensor& loss);

    std::size_t size() const noexcept { return ops_.size(); }
    bool consumed() const noexcept { return consumed_; }

private:
    std::vector<BackwardFn> ops_;
    bool consumed_ = false;
};

/// Makes a tape the active recorder for the current thread for its lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Tape active on this thread, or nullptr.
Tape* active_tape() noexcept;

/// Suspends recording on this thread for its lifetime.
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

}  // namespace drs::ad
