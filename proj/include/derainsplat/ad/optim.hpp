#pragma once

#include "derainsplat/ad/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace drs::ad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over named parameter groups, each with its own
/// learning rate. Parameters are updated in place from their .grad().
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void add_group(std::string name, std::vector<Tensor> params, double lr);
    void set_lr(const std::string& group, double lr);
    double lr(const std::string& group) const;

    /// One update of every group. A parameter without a gradient is treated
    /// as having a zero gradient. Throws NumericalError on non-finite
    /// gradients before touching any parameter.
    void step();
    void zero_grad();

    std::size_t step_count() const noexcept { return steps_; }

private:
    struct Slot {
        Tensor param;
        std::vector<double> m, v;
    };
    struct Group {
        std::string name;
        double lr;
        std::vector<Slot> slots;
    };
    Group& find(const std::string& name);
    const Group& find(const std::string& name) const;

    AdamConfig config_;
    std::vector<Group> groups_;
    std::size_t steps_ = 0;
};

}  // namespace drs::ad
