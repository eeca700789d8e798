#include "derainsplat/pipeline/dataset.hpp"

#include "derainsplat/common/error.hpp"
#include "derainsplat/common/random.hpp"
#include "derainsplat/io/image.hpp"
#include "derainsplat/rain/texture.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace drs::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string numbered(const char* stem, std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s/%03zu.png", stem, k);
    return buf;
}

}  // namespace

std::vector<TrainingView> SyntheticScene::training_views() const {
    std::vector<TrainingView> out;
    for (std::size_t k = 0; k < rainy.size(); ++k) out.push_back({k, rainy[k].image, cameras[k]});
    return out;
}

SyntheticScene synth_flatland_scene(const rain::SceneRainConfig& rain, const SynthConfig& synth) {
    SyntheticScene s;
    s.name = "flatland";
    s.flatland = true;
    const Tensor clean = rain::procedural_texture(synth.texture_seed, synth.height, synth.width);
    for (std::size_t k = 0; k < synth.views; ++k) {
        s.clean.push_back(clean);
        s.rainy.push_back(rain::apply_scene_rain(rain, clean, k));
        s.cameras.emplace_back();
    }
    return s;
}

SyntheticScene synth_3d_scene(const rain::SceneRainConfig& rain, const SynthConfig& synth) {
    SyntheticScene s;
    s.name = "synthetic";
    Rng rng(mix_seed(synth.texture_seed ^ 0x3d5ceeULL));
    std::vector<splat::Point> truth(200);
    for (auto& p : truth)
        for (int a = 0; a < 3; ++a) {
            p.position[a] = rng.uniform(-1.0, 1.0);
            p.color[a] = rng.uniform(0.1, 0.9);
        }
    splat::InitConfig ic;
    ic.initial_opacity = 0.8;
    const splat::GaussianSet gt = splat::init_gaussians(truth, ic);
    splat::RasterSettings rs;
    rs.width = synth.width;
    rs.height = synth.height;
    for (std::size_t k = 0; k < synth.views; ++k) {
        const double phi = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(synth.views);
        const splat::Camera cam = splat::look_at({4.0 * std::cos(phi), 1.0, 4.0 * std::sin(phi)}, {0, 0, 0},
                                                 {0, -1, 0}, 45.0, synth.width, synth.height);
        ad::NoGradScope no_grad;
        const Tensor clean = splat::render(gt, cam, rs).color;
        s.clean.push_back(clean);
        s.rainy.push_back(rain::apply_scene_rain(rain, clean, k));
        s.cameras.emplace_back(cam);
    }
    for (auto p : truth) {
        for (int a = 0; a < 3; ++a) p.position[a] += rng.normal(0.0, 0.02);
        p.color = {0.5, 0.5, 0.5};
        s.points.push_back(p);
    }
    return s;
}

std::vector<enhance::ImagePair> synth_pairs(const rain::SceneRainConfig& rain, std::size_t count, std::size_t height,
                                            std::size_t width, std::uint64_t seed) {
    std::vector<enhance::ImagePair> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Tensor clean = rain::procedural_texture(seed * 1000003ULL + i, height, width);
        rain::SceneRainConfig rc = rain;
        rc.base_seed = mix_seed(mix_seed(seed) + i);
        out.push_back({rain::apply_scene_rain(rc, clean, 0).image, clean});
    }
    return out;
}

SceneManifest write_scene(const SyntheticScene& scene, const rain::SceneRainConfig& rain, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "rainy");
    fs::create_directories(fs::path(dir) / "clean");
    SceneManifest m;
    m.name = scene.name;
    m.flatland = scene.flatland;
    RunConfig rc;
    rc.rain = rain;
    m.rain = to_json(rc).at("rain");
    for (std::size_t k = 0; k < scene.rainy.size(); ++k) {
        ManifestView v;
        v.view_index = k;
        v.image = (fs::path(dir) / numbered("rainy", k)).string();
        v.clean_image = (fs::path(dir) / numbered("clean", k)).string();
        io::write_png(v.image, scene.rainy[k].image);
        io::write_png(*v.clean_image, scene.clean[k]);
        v.camera = scene.cameras[k];
        m.views.push_back(std::move(v));
    }
    if (!scene.points.empty()) {
        m.points = (fs::path(dir) / "points.json").string();
        save_points(*m.points, scene.points);
    }
    const std::string path = (fs::path(dir) / "manifest.json").string();
    save_manifest(path, m);
    return load_manifest(path);
}

std::vector<TrainingView> load_training_views(const SceneManifest& m) {
    std::vector<TrainingView> out;
    for (const auto& v : m.views) out.push_back({v.view_index, io::read_png(v.image), v.camera});
    return out;
}

std::vector<Tensor> load_clean_images(const SceneManifest& m) {
    std::vector<Tensor> out;
    for (const auto& v : m.views) {
        if (!v.clean_image)
            throw ValidationError("manifest: view " + std::to_string(v.view_index) + " has no clean_image");
        out.push_back(io::read_png(*v.clean_image));
    }
    return out;
}

void write_pairs(const std::vector<enhance::ImagePair>& pairs, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "rainy");
    fs::create_directories(fs::path(dir) / "clean");
    json j{{"schema", "derainsplat.pairs/1"}, {"pairs", json::array()}};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        io::write_png((fs::path(dir) / numbered("rainy", i)).string(), pairs[i].rainy);
        io::write_png((fs::path(dir) / numbered("clean", i)).string(), pairs[i].clean);
        j["pairs"].push_back({{"rainy", numbered("rainy", i)}, {"clean", numbered("clean", i)}});
    }
    std::ofstream os(fs::path(dir) / "pairs.json");
    if (!os) throw ValidationError("cannot write pairs.json in '" + dir + "'");
    os << j.dump(2) << '\n';
}

std::vector<enhance::ImagePair> load_pairs(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("pairs: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(is);
        if (j.value("schema", "") != "derainsplat.pairs/1")
            throw ValidationError("pairs '" + path + "': schema must be derainsplat.pairs/1");
        const fs::path base = fs::path(path).parent_path();
        std::vector<enhance::ImagePair> out;
        for (const auto& e : j.at("pairs"))
            out.push_back({io::read_png((base / e.at("rainy").get<std::string>()).string()),
                           io::read_png((base / e.at("clean").get<std::string>()).string())});
        if (out.empty()) throw ValidationError("pairs '" + path + "' lists no pairs");
        return out;
    } catch (const json::exception& e) {
        throw ValidationError("pairs '" + path + "': " + e.what());
    }
}

}  // namespace drs::pipeline
