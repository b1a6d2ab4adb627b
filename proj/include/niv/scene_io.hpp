#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "niv/scene.hpp"

namespace niv {

using Digest = std::array<uint8_t, 32>;

// SHA-256 of arbitrary bytes.
Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& d);

// Parses a scene description. `base_dir` resolves relative obj_path entries.
SceneDesc parse_scene(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct LoadedScene {
  SceneDesc desc;
  Digest hash{};  // SHA-256 of the file bytes
};

LoadedScene load_scene_file(const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(std::string_view text, const std::string& id);

// Procedural primitives, also reachable from scene files.
Mesh make_quad(const std::array<Vec3, 4>& corners);
Mesh make_box(const Vec3& lo, const Vec3& hi, bool inward = false, bool open_bottom = false);
Mesh make_sphere(const Vec3& center, double radius, int segments = 24);

}  // namespace niv
