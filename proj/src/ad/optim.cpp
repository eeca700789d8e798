#include "derainsplat/ad/optim.hpp"

#include "derainsplat/common/error.hpp"

#include <cmath>
#include <stdexcept>

namespace drs::ad {

void Adam::add_group(std::string name, std::vector<Tensor> params, double lr) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("Adam: learning rate for '" + name + "' must be >= 0");
    for (const auto& g : groups_)
        if (g.name == name) throw ValidationError("Adam: duplicate group '" + name + "'");
    Group g{std::move(name), lr, {}};
    for (auto& p : params) g.slots.push_back({p, std::vector<double>(p.numel(), 0.0), std::vector<double>(p.numel(), 0.0)});
    groups_.push_back(std::move(g));
}

Adam::Group& Adam::find(const std::string& name) {
    for (auto& g : groups_)
        if (g.name == name) return g;
    throw std::out_of_range("Adam: no group '" + name + "'");
}

const Adam::Group& Adam::find(const std::string& name) const {
    for (const auto& g : groups_)
        if (g.name == name) return g;
    throw std::out_of_range("Adam: no group '" + name + "'");
}

void Adam::set_lr(const std::string& group, double lr) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("Adam: learning rate for '" + group + "' must be >= 0");
    find(group).lr = lr;
}

double Adam::lr(const std::string& group) const { return find(group).lr; }

void Adam::step() {
    for (const auto& g : groups_)
        for (const auto& s : g.slots)
            if (s.param.has_grad())
                for (double v : s.param.grad())
                    if (!std::isfinite(v)) throw NumericalError("Adam: non-finite gradient in group '" + g.name + "'");
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    for (auto& g : groups_)
        for (auto& s : g.slots) {
            auto p = s.param.mutable_values();
            const bool has = s.param.has_grad();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = has ? s.param.grad()[i] : 0.0;
                s.m[i] = config_.beta1 * s.m[i] + (1.0 - config_.beta1) * gi;
                s.v[i] = config_.beta2 * s.v[i] + (1.0 - config_.beta2) * gi * gi;
                const double mh = s.m[i] / bc1, vh = s.v[i] / bc2;
                p[i] -= g.lr * mh / (std::sqrt(vh) + config_.eps);
            }
        }
}

void Adam::zero_grad() {
    for (auto& g : groups_)
        for (auto& s : g.slots) s.param.clear_grad();
}

}  // namespace drs::ad
