#pragma once

#include "derainsplat/ad/tensor.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace drs::ad {

/// Named parameter leaves, iterated in name order.
class ParamStore {
public:
    /// Throws std::invalid_argument on a duplicate name.
    Tensor& add(const std::string& name, Tensor value);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::vector<std::pair<std::string, Tensor*>> entries();
    std::vector<std::pair<std::string, const Tensor*>> entries() const;
    std::vector<Tensor> tensors() const;

    /// Frozen stores keep requires_grad off, so no op ever records gradients
    /// into them.
    void set_frozen(bool frozen);
    bool frozen() const noexcept { return frozen_; }

    std::size_t parameter_count() const;
    std::size_t size() const noexcept { return params_.size(); }

private:
    std::map<std::string, Tensor> params_;
    bool frozen_ = false;
};

}  // namespace drs::ad
