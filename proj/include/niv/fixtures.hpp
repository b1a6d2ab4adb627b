#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "niv/scene.hpp"

namespace niv::fixtures {

// Procedural test scenes, emitted as scene-file JSON so they round-trip
// through the regular loader and can be written out with `niv fixture`.
//
//   cornell     unit box, open front, red/green side walls, ceiling light, two blocks
//   closed_box  closed white unit box with an emissive ceiling patch
//   floor_env   large albedo-0.5 floor under a unit environment
//   plate_env   floor with a large plate hovering just above it, environment lit
//   leak        two rooms split by a thin wall with a doorway; light in the left room
//   solid_box   floor plus a solid box filling half the bounding volume, environment lit
//   sun_room    open courtyard lit by a directional sun whose angle is a variable param
nlohmann::json scene_json(const std::string& name);
std::vector<std::string> names();

SceneDesc desc(const std::string& name);
Scene scene(const std::string& name);

// Adds a dynamic sphere instance (optionally a mirror) to a description.
void add_dynamic_sphere(SceneDesc& d, const Vec3& center, double radius, const Rgb& albedo,
                        MaterialKind kind = MaterialKind::diffuse);

}  // namespace niv::fixtures
