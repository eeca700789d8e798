#include "derainsplat/ad/grad_check.hpp"

#include "derainsplat/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drs::ad {

GradCheckResult grad_check_detailed(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ValidationError("grad_check: eps must lie in [1e-7, 1e-3], got " + std::to_string(eps));
    }
    std::vector<std::vector<double>> analytic;
    {
        for (Tensor& leaf : leaves) {
            leaf.set_requires_grad(true);
            leaf.clear_grad();
        }
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = f();
        }
        if (loss.numel() != 1) {
            throw DimensionError("grad_check: f must return a scalar, got shape " + shape_str(loss.shape()));
        }
        tape.backward(loss);
        for (Tensor& leaf : leaves) {
            if (leaf.has_grad()) {
                analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
            } else {
                analytic.emplace_back(leaf.numel(), 0.0);
            }
            leaf.clear_grad();
        }
    }

    auto eval = [&f] {
        NoGradScope no_grad;
        return f().item();
    };

    GradCheckResult res;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto vals = leaves[li].mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double fp = eval();
            vals[i] = orig - eps;
            const double fm = eval();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[li][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
            const double err = std::fabs(a - numeric) / denom;
            if (err > res.max_rel_error) res = {err, li, i, a, numeric};
        }
    }
    return res;
}

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps) {
    return grad_check_detailed(f, std::move(leaves), eps).max_rel_error;
}

}  // namespace drs::ad
