#include "derainsplat/ad/tensor.hpp"

#include "derainsplat/common/error.hpp"

#include <stdexcept>

namespace drs::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                             " values, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

std::size_t Tensor::size(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
    }
    return node_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    if (!node_->leaf) throw std::logic_error("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = on;
    return *this;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value); }

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("tape already consumed by a previous backward()");
    if (!loss.defined() || loss.numel() != 1) {
        throw DimensionError("backward() requires a scalar loss, got shape " +
                             (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    consumed_ = true;
    if (!loss.requires_grad()) {
        ops_.clear();
        return;
    }
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() noexcept { return g_active_tape; }

}  // namespace drs::ad
