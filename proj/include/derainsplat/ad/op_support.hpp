#pragma once

// Helpers for writing taped ops: result construction with finiteness checks,
// shape guards and the recording predicate.

#include "derainsplat/ad/tensor.hpp"
#include "derainsplat/common/error.hpp"

#include <cmath>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace drs::ad::detail {

using NodePtr = std::shared_ptr<Node>;

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (active_tape() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

inline Tensor make_result(const char* op, Shape shape, std::vector<double> values, bool track) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericalError(std::string(op) + ": produced a non-finite value");
    }
    Tensor out(std::move(shape), std::move(values));
    out.node()->requires_grad = track;
    out.node()->leaf = !track;
    return out;
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

inline void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                             ", got shape " + shape_str(t.shape()));
    }
}

inline bool wants_grad(const NodePtr& n) { return n && n->requires_grad; }

}  // namespace drs::ad::detail
