#include "derainsplat/pipeline/checkpoint.hpp"

#include "derainsplat/common/error.hpp"
#include "derainsplat/io/archive.hpp"

#include <algorithm>

namespace drs::pipeline {

using nlohmann::json;

namespace {

void expect_kind(const io::Archive& a, const std::string& kind, const std::string& path) {
    if (a.meta.value("kind", "") != kind)
        throw ValidationError("checkpoint '" + path + "' is not a " + kind + " checkpoint");
}

// Copies archive values into existing, already shaped parameters.
void restore_params(ad::ParamStore& ps, const io::Archive& a, const std::string& prefix, const std::string& path) {
    for (auto& [name, t] : ps.entries()) {
        const Tensor& src = a.at(prefix + name);
        if (src.shape() != t->shape())
            throw ValidationError("checkpoint '" + path + "': " + prefix + name + " has shape " +
                                  ad::shape_str(src.shape()) + ", expected " + ad::shape_str(t->shape()));
        std::copy(src.values().begin(), src.values().end(), t->mutable_values().begin());
    }
}

}  // namespace

void save_enhancer(const std::string& path, const enhance::Enhancer& net) {
    RunConfig rc;
    rc.enhancer = net.config();
    io::Archive a;
    a.meta = {{"kind", "enhancer"}, {"enhancer", to_json(rc).at("enhancer")}};
    for (const auto& [name, t] : net.params().entries()) a.tensors.emplace(name, t->detach());
    io::save_archive(path, a);
}

enhance::Enhancer load_enhancer(const std::string& path) {
    const io::Archive a = io::load_archive(path);
    expect_kind(a, "enhancer", path);
    const RunConfig rc = parse_run_config(json{{"enhancer", a.meta.at("enhancer")}});
    enhance::Enhancer net(rc.enhancer, 0);
    restore_params(net.params(), a, "", path);
    net.freeze();
    return net;
}

void save_reconstruction(const std::string& path, const ReconstructResult& r, const RunConfig& config) {
    io::Archive a;
    a.meta = {{"kind", "reconstruction"},
              {"config", to_json(config)},
              {"height", r.scene.height},
              {"width", r.scene.width},
              {"sh_degree", r.scene.gaussians.sh_degree},
              {"iterations_done", r.iterations_done}};
    SceneModel scene = r.scene;
    for (const auto& [name, t] : scene.parameters()) a.tensors.emplace("scene." + name, t->detach());
    if (r.mask)
        for (const auto& [name, t] : r.mask->params().entries()) a.tensors.emplace("mask." + name, t->detach());
    for (std::size_t k = 0; k < r.targets.size(); ++k) a.tensors.emplace("target." + std::to_string(k), r.targets[k]);
    io::save_archive(path, a);
}

Checkpoint load_reconstruction(const std::string& path) {
    const io::Archive a = io::load_archive(path);
    expect_kind(a, "reconstruction", path);
    Checkpoint c;
    try {
        c.config = parse_run_config(a.meta.at("config"));
        SceneModel& s = c.result.scene;
        s.flatland = c.config.reconstruct.flatland;
        s.height = a.meta.at("height");
        s.width = a.meta.at("width");
        s.background = c.config.reconstruct.background;
        s.gaussians.sh_degree = a.meta.at("sh_degree");
        c.result.iterations_done = a.meta.at("iterations_done");
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint '" + path + "': " + e.what());
    }
    SceneModel& s = c.result.scene;
    for (auto& [name, t] : s.parameters()) *t = a.at("scene." + name).detach();
    if (s.flatland)
        s.flat.validate();
    else
        s.gaussians.validate();
    if (c.config.reconstruct.use_mask) {
        freqmask::MaskConfig mc = c.config.reconstruct.mask;
        mc.use_channel_attention = c.config.reconstruct.use_channel_attention;
        c.result.mask.emplace(mc, 0);
        restore_params(c.result.mask->params(), a, "mask.", path);
    }
    for (std::size_t k = 0; a.tensors.count("target." + std::to_string(k)); ++k) {
        const Tensor& t = a.at("target." + std::to_string(k));
        if (t.shape() != ad::Shape{3, s.height, s.width})
            throw ValidationError("checkpoint '" + path + "': target " + std::to_string(k) + " has the wrong shape");
        c.result.targets.push_back(t);
    }
    return c;
}

}  // namespace drs::pipeline
