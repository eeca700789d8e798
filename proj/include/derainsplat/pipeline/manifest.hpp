#pragma once

// Scene manifest: the JSON file listing a scene's rainy views, cameras and
// optional ground truth. Relative paths resolve against the manifest's
// directory.
//
//   {
//     "schema": "derainsplat.manifest/1",
//     "name": "garden",
//     "flatland": false,                 // optional; flatland views need no camera
//     "points": "points.json",           // optional init cloud
//     "rain": { ... },                   // optional: rain config used by synth
//     "views": [
//       { "view_index": 0,
//         "image": "rainy/000.png",
//         "clean_image": "clean/000.png", // optional, read by eval only
//         "camera": { "width": 64, "height": 64, "fx": 60, "fy": 60,
//                     "cx": 32, "cy": 32,
//                     "world_to_camera": [16 numbers, row-major] } }
//     ]
//   }
//
// A points file is a JSON array of {"position": [x,y,z], "color": [r,g,b]}
// with color optional.

#include "derainsplat/splat/camera.hpp"
#include "derainsplat/splat/scene.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace drs::pipeline {

inline constexpr const char* kManifestSchema = "derainsplat.manifest/1";

struct ManifestView {
    std::size_t view_index = 0;
    std::string image;                       // resolved path
    std::optional<std::string> clean_image;  // resolved path
    std::optional<splat::Camera> camera;
};

struct SceneManifest {
    std::string name;
    bool flatland = false;
    std::vector<ManifestView> views;  // sorted by view_index
    std::optional<std::string> points;
    nlohmann::json rain;  // null when absent

    bool has_clean_images() const;
};

/// Parses and validates. Errors name the offending entry: unknown schema,
/// missing file, duplicate or non-contiguous view index, missing camera in a
/// 3D scene, non-rigid or reflected camera rotation.
SceneManifest load_manifest(const std::string& path);
SceneManifest parse_manifest(const nlohmann::json& j, const std::string& base_dir);

/// Writes paths relative to the manifest directory when they lie below it.
void save_manifest(const std::string& path, const SceneManifest& manifest);

std::vector<splat::Point> load_points(const std::string& path);
void save_points(const std::string& path, const std::vector<splat::Point>& points);

nlohmann::json camera_to_json(const splat::Camera& cam);
/// Validates the camera; throws ValidationError.
splat::Camera camera_from_json(const nlohmann::json& j);

}  // namespace drs::pipeline
