#pragma once

#include "derainsplat/ad/tensor.hpp"

#include <functional>
#include <vector>

namespace drs::ad {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_leaf = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares tape gradients of the scalar computation `f` against central
/// differences with step `eps` for every element of every leaf.
///
/// Per-element error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3):
/// relative for gradients above 1e-3 in magnitude, absolute (scaled by 1e-3)
/// below, so round-off in vanishing components is not mistaken for a defect.
///
/// `f` must be deterministic in the leaf values. The leaves are marked
/// requires_grad for the analytic pass and their values are restored exactly.
GradCheckResult grad_check_detailed(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps = 1e-5);

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps = 1e-5);

}  // namespace drs::ad
