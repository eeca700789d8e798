#include "derainsplat/ad/params.hpp"

#include "derainsplat/common/error.hpp"

#include <stdexcept>

namespace drs::ad {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    value.set_requires_grad(!frozen_);
    return params_.emplace(name, std::move(value)).first->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
}

std::vector<std::pair<std::string, Tensor*>> ParamStore::entries() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& [k, v] : params_) out.emplace_back(k, &v);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ParamStore::entries() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& [k, v] : params_) out.emplace_back(k, &v);
    return out;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    for (const auto& [k, v] : params_) out.push_back(v);
    return out;
}

void ParamStore::set_frozen(bool frozen) {
    frozen_ = frozen;
    for (auto& [k, v] : params_) {
        v.set_requires_grad(!frozen);
        if (frozen && v.has_grad()) v.clear_grad();
    }
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
}

}  // namespace drs::ad
