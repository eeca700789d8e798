#include "derainsplat/pipeline/manifest.hpp"

#include "derainsplat/common/error.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace drs::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path, const char* what) {
    std::ifstream is(path);
    if (!is) throw ValidationError(std::string(what) + ": cannot open '" + path + "'");
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ValidationError(std::string(what) + " '" + path + "': " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os << j.dump(2) << '\n';
}

std::string resolve(const std::string& base, const std::string& p, const std::string& entry) {
    const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : fs::path(base) / p;
    if (!fs::exists(full)) throw ValidationError("manifest: " + entry + " refers to missing file '" + full.string() + "'");
    return full.lexically_normal().string();
}

std::string relative_to(const std::string& base, const std::string& p) {
    const fs::path rel = fs::path(p).lexically_relative(fs::path(base));
    if (rel.empty() || *rel.begin() == "..") return p;
    return rel.string();
}

}  // namespace

bool SceneManifest::has_clean_images() const {
    return !views.empty() && std::all_of(views.begin(), views.end(), [](const ManifestView& v) {
        return v.clean_image.has_value();
    });
}

json camera_to_json(const splat::Camera& cam) {
    return {{"width", cam.width}, {"height", cam.height}, {"fx", cam.fx},  {"fy", cam.fy},
            {"cx", cam.cx},       {"cy", cam.cy},         {"world_to_camera", cam.world_to_camera}};
}

splat::Camera camera_from_json(const json& j) {
    splat::Camera c;
    try {
        c.width = j.at("width");
        c.height = j.at("height");
        c.fx = j.at("fx");
        c.fy = j.at("fy");
        c.cx = j.at("cx");
        c.cy = j.at("cy");
        const auto m = j.at("world_to_camera").get<std::vector<double>>();
        if (m.size() != 16) throw ValidationError("camera: world_to_camera needs 16 numbers");
        std::copy(m.begin(), m.end(), c.world_to_camera.begin());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("camera: ") + e.what());
    }
    c.validate();
    return c;
}

SceneManifest parse_manifest(const json& j, const std::string& base_dir) {
    if (!j.is_object()) throw ValidationError("manifest: top level must be an object");
    const std::string schema = j.value("schema", "");
    if (schema != kManifestSchema)
        throw ValidationError("manifest: schema '" + schema + "' is not " + kManifestSchema);
    SceneManifest m;
    try {
        m.name = j.value("name", "");
        m.flatland = j.value("flatland", false);
        if (j.contains("points")) m.points = resolve(base_dir, j.at("points").get<std::string>(), "points");
        if (j.contains("rain")) m.rain = j.at("rain");
        const json& views = j.at("views");
        if (!views.is_array() || views.empty()) throw ValidationError("manifest: 'views' must be a non-empty array");
        for (std::size_t i = 0; i < views.size(); ++i) {
            const json& v = views[i];
            const std::string entry = "views[" + std::to_string(i) + "]";
            ManifestView mv;
            mv.view_index = v.at("view_index").get<std::size_t>();
            mv.image = resolve(base_dir, v.at("image").get<std::string>(), entry + ".image");
            if (v.contains("clean_image"))
                mv.clean_image = resolve(base_dir, v.at("clean_image").get<std::string>(), entry + ".clean_image");
            if (v.contains("camera")) {
                try {
                    mv.camera = camera_from_json(v.at("camera"));
                } catch (const ValidationError& e) {
                    throw ValidationError("manifest: " + entry + " (view_index " + std::to_string(mv.view_index) +
                                          "): " + e.what());
                }
            } else if (!m.flatland) {
                throw ValidationError("manifest: " + entry + " (view_index " + std::to_string(mv.view_index) +
                                      ") has no camera");
            }
            m.views.push_back(std::move(mv));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    std::stable_sort(m.views.begin(), m.views.end(),
                     [](const ManifestView& a, const ManifestView& b) { return a.view_index < b.view_index; });
    for (std::size_t i = 0; i < m.views.size(); ++i) {
        if (i > 0 && m.views[i].view_index == m.views[i - 1].view_index)
            throw ValidationError("manifest: duplicate view_index " + std::to_string(m.views[i].view_index));
        if (m.views[i].view_index != i)
            throw ValidationError("manifest: view indices must be contiguous from 0; missing " + std::to_string(i));
    }
    return m;
}

SceneManifest load_manifest(const std::string& path) {
    if (!fs::exists(path)) throw ValidationError("manifest: file '" + path + "' does not exist");
    const std::string base = fs::path(path).parent_path().string();
    return parse_manifest(read_json(path, "manifest"), base.empty() ? "." : base);
}

void save_manifest(const std::string& path, const SceneManifest& m) {
    std::string base = fs::path(path).parent_path().string();
    if (base.empty()) base = ".";
    json j;
    j["schema"] = kManifestSchema;
    j["name"] = m.name;
    j["flatland"] = m.flatland;
    if (m.points) j["points"] = relative_to(base, *m.points);
    if (!m.rain.is_null()) j["rain"] = m.rain;
    j["views"] = json::array();
    for (const auto& v : m.views) {
        json e{{"view_index", v.view_index}, {"image", relative_to(base, v.image)}};
        if (v.clean_image) e["clean_image"] = relative_to(base, *v.clean_image);
        if (v.camera) e["camera"] = camera_to_json(*v.camera);
        j["views"].push_back(std::move(e));
    }
    write_json(path, j);
}

std::vector<splat::Point> load_points(const std::string& path) {
    const json j = read_json(path, "points");
    if (!j.is_array()) throw ValidationError("points '" + path + "': expected an array");
    std::vector<splat::Point> pts;
    try {
        for (const auto& e : j) {
            splat::Point p;
            p.position = e.at("position").get<splat::Vec3>();
            if (e.contains("color")) p.color = e.at("color").get<splat::Vec3>();
            pts.push_back(p);
        }
    } catch (const json::exception& e) {
        throw ValidationError("points '" + path + "': " + e.what());
    }
    return pts;
}

void save_points(const std::string& path, const std::vector<splat::Point>& points) {
    json j = json::array();
    for (const auto& p : points) j.push_back({{"position", p.position}, {"color", p.color}});
    write_json(path, j);
}

}  // namespace drs::pipeline
