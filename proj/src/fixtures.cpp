#include "niv/fixtures.hpp"

#include "niv/error.hpp"
#include "niv/scene_io.hpp"

namespace niv::fixtures {

using nlohmann::json;

namespace {

json v3(double x, double y, double z) { return json::array({x, y, z}); }

class Builder {
 public:
  Builder& quad(const std::string& mesh, const std::array<json, 4>& c) {
    j_["meshes"].push_back(
        {{"id", mesh},
         {"primitive", {{"type", "quad"}, {"params", {{"corners", json::array({c[0], c[1], c[2], c[3]})}}}}}});
    return *this;
  }
  Builder& box(const std::string& mesh, const json& lo, const json& hi, bool inward = false) {
    json params = {{"min", lo}, {"max", hi}};
    if (inward) params["inward"] = true;
    j_["meshes"].push_back({{"id", mesh}, {"primitive", {{"type", "box"}, {"params", params}}}});
    return *this;
  }
  Builder& material(const std::string& id, const json& albedo, const json& emission = v3(0, 0, 0)) {
    j_["materials"].push_back(
        {{"id", id}, {"albedo", albedo}, {"emission", emission}, {"kind", "diffuse"}});
    return *this;
  }
  Builder& instance(const std::string& mesh, const std::string& mat, json transform = nullptr) {
    json inst = {{"mesh", mesh}, {"material", mat}, {"dynamic", false}};
    if (!transform.is_null()) inst["transform"] = std::move(transform);
    j_["instances"].push_back(std::move(inst));
    return *this;
  }
  // Mesh + instance in one go for quads that own their material.
  Builder& wall(const std::string& id, const std::string& mat, const std::array<json, 4>& c) {
    quad(id, c);
    return instance(id, mat);
  }
  Builder& env(double l) {
    j_["emitters"].push_back({{"type", "env"}, {"radiance", v3(l, l, l)}});
    return *this;
  }
  Builder& sun(const json& dir, double l) {
    j_["emitters"].push_back({{"type", "directional"}, {"direction", dir}, {"radiance", v3(l, l, l)}});
    return *this;
  }
  Builder& camera(const json& origin, const json& look_at, double fov) {
    j_["camera"] = {{"origin", origin}, {"look_at", look_at}, {"up", v3(0, 1, 0)}, {"fov_y_degrees", fov}};
    return *this;
  }
  json& raw() { return j_; }
  json done() {
    for (const char* k : {"meshes", "materials", "instances", "emitters"})
      if (!j_.contains(k)) j_[k] = json::array();
    return j_;
  }

 private:
  json j_ = json::object();
};

// Light patch at height h facing down, spanning [a, b] in x and z.
std::array<json, 4> ceiling_patch(double a, double b, double h) {
  return {v3(a, h, a), v3(b, h, a), v3(b, h, b), v3(a, h, b)};
}

json cornell() {
  Builder b;
  b.material("white", v3(0.73, 0.73, 0.73))
      .material("red", v3(0.65, 0.05, 0.05))
      .material("green", v3(0.12, 0.45, 0.15))
      .material("light", v3(0.78, 0.78, 0.78), v3(12, 12, 12));
  b.wall("floor", "white", {v3(0, 0, 0), v3(0, 0, 1), v3(1, 0, 1), v3(1, 0, 0)})
      .wall("ceiling", "white", {v3(0, 1, 0), v3(1, 1, 0), v3(1, 1, 1), v3(0, 1, 1)})
      .wall("back", "white", {v3(0, 0, 0), v3(1, 0, 0), v3(1, 1, 0), v3(0, 1, 0)})
      .wall("left", "red", {v3(0, 0, 0), v3(0, 1, 0), v3(0, 1, 1), v3(0, 0, 1)})
      .wall("right", "green", {v3(1, 0, 0), v3(1, 0, 1), v3(1, 1, 1), v3(1, 1, 0)})
      .wall("light", "light", ceiling_patch(0.38, 0.62, 0.998));
  b.box("short_block", v3(-0.15, 0, -0.15), v3(0.15, 0.3, 0.15))
      .instance("short_block", "white",
                {{"translate", v3(0.66, 0.002, 0.64)}, {"rotate_axis_angle", json::array({0, 1, 0, -17})}})
      .box("tall_block", v3(-0.15, 0, -0.15), v3(0.15, 0.6, 0.15))
      .instance("tall_block", "white",
                {{"translate", v3(0.33, 0.002, 0.36)}, {"rotate_axis_angle", json::array({0, 1, 0, 17})}});
  b.camera(v3(0.5, 0.5, 2.3), v3(0.5, 0.5, 0), 39);
  return b.done();
}

json closed_box() {
  Builder b;
  b.material("white", v3(0.5, 0.5, 0.5)).material("light", v3(0.5, 0.5, 0.5), v3(10, 10, 10));
  b.box("room", v3(0, 0, 0), v3(1, 1, 1), true).instance("room", "white");
  b.wall("light", "light", ceiling_patch(0.4, 0.6, 0.999));
  b.camera(v3(0.5, 0.5, 0.95), v3(0.5, 0.5, 0), 60);
  return b.done();
}

json floor_env() {
  Builder b;
  const double s = 1000;
  b.material("floor", v3(0.5, 0.5, 0.5));
  b.wall("floor", "floor", {v3(-s, 0, -s), v3(-s, 0, s), v3(s, 0, s), v3(s, 0, -s)});
  b.env(1.0);
  b.camera(v3(0, 2, 4), v3(0, 0, 0), 45);
  return b.done();
}

json plate_env() {
  Builder b;
  const double s = 100;
  b.material("grey", v3(0.5, 0.5, 0.5));
  b.wall("floor", "grey", {v3(-s, 0, -s), v3(-s, 0, s), v3(s, 0, s), v3(s, 0, -s)});
  b.wall("plate", "grey", {v3(-s, 1, -s), v3(s, 1, -s), v3(s, 1, s), v3(-s, 1, s)});
  b.env(1.0);
  b.camera(v3(0, 0.5, 3), v3(0, 0.5, 0), 45);
  return b.done();
}

json leak() {
  Builder b;
  b.material("white", v3(0.7, 0.7, 0.7))
      .material("orange", v3(0.8, 0.45, 0.1))
      .material("light", v3(0.7, 0.7, 0.7), v3(10, 10, 10));
  b.box("room", v3(0, 0, 0), v3(2, 1, 1), true).instance("room", "white");
  // Divider at x in [1.1, 1.14] with a doorway at z in [0.8, 1], y in [0, 0.5].
  b.box("wall_main", v3(1.1, 0, 0), v3(1.14, 1, 0.8)).instance("wall_main", "orange");
  b.box("wall_lintel", v3(1.1, 0.5, 0.8), v3(1.14, 1, 1)).instance("wall_lintel", "orange");
  b.wall("light", "light", {v3(0.3, 0.998, 0.3), v3(0.8, 0.998, 0.3), v3(0.8, 0.998, 0.7),
                            v3(0.3, 0.998, 0.7)});
  b.camera(v3(1.0, 0.5, 2.8), v3(1.0, 0.5, 0), 50);
  return b.done();
}

json solid_box() {
  Builder b;
  b.material("grey", v3(0.6, 0.6, 0.6)).material("blue", v3(0.2, 0.3, 0.7));
  // floor only where the box is not, so nothing is coplanar with its bottom
  b.wall("floor", "grey", {v3(1, 0, 0), v3(1, 0, 2), v3(2, 0, 2), v3(2, 0, 0)});
  b.box("solid", v3(0, 0, 0), v3(1, 1, 2)).instance("solid", "blue");
  b.env(1.0);
  b.camera(v3(3.5, 2, 3.5), v3(1, 0.5, 1), 45);
  return b.done();
}

json sun_room() {
  Builder b;
  b.material("floor", v3(0.6, 0.6, 0.6))
      .material("brick", v3(0.7, 0.3, 0.2))
      .material("moss", v3(0.3, 0.6, 0.3))
      .material("stone", v3(0.75, 0.75, 0.7));
  b.wall("floor", "floor", {v3(-1, 0, -1), v3(-1, 0, 1), v3(1, 0, 1), v3(1, 0, -1)})
      .wall("back", "brick", {v3(-1, 0, -1), v3(1, 0, -1), v3(1, 1, -1), v3(-1, 1, -1)})
      .wall("left", "moss", {v3(-1, 0, -1), v3(-1, 1, -1), v3(-1, 1, 1), v3(-1, 0, 1)});
  b.box("pillar", v3(-0.2, 0.002, -0.2), v3(0.2, 0.45, 0.2)).instance("pillar", "stone");
  b.sun(v3(-0.4, -1.0, -0.3), 3.0);
  b.raw()["variable_params"] = json::array(
      {{{"name", "sun_angle"}, {"min", -40.0}, {"max", 40.0}, {"emitter", 0}, {"axis", v3(0, 0, 1)}}});
  b.camera(v3(1.8, 1.4, 1.9), v3(-0.2, 0.3, -0.2), 50);
  return b.done();
}

}  // namespace

std::vector<std::string> names() {
  return {"cornell", "closed_box", "floor_env", "plate_env", "leak", "solid_box", "sun_room"};
}

json scene_json(const std::string& name) {
  if (name == "cornell") return cornell();
  if (name == "closed_box") return closed_box();
  if (name == "floor_env") return floor_env();
  if (name == "plate_env") return plate_env();
  if (name == "leak") return leak();
  if (name == "solid_box") return solid_box();
  if (name == "sun_room") return sun_room();
  throw InputError("unknown fixture '" + name + "'");
}

SceneDesc desc(const std::string& name) { return parse_scene(scene_json(name)); }

Scene scene(const std::string& name) { return Scene(desc(name)); }

void add_dynamic_sphere(SceneDesc& d, const Vec3& center, double radius, const Rgb& albedo,
                        MaterialKind kind) {
  Mesh m = make_sphere({0, 0, 0}, 1.0, 32);
  m.id = "dynamic_sphere_" + std::to_string(d.meshes.size());
  d.meshes.push_back(std::move(m));
  Material mat;
  mat.id = "dynamic_material_" + std::to_string(d.materials.size());
  mat.albedo = albedo;
  mat.kind = kind;
  d.materials.push_back(mat);
  Instance inst;
  inst.mesh = d.meshes.size() - 1;
  inst.material = d.materials.size() - 1;
  inst.transform.translate = center;
  inst.transform.scale = radius;
  inst.dynamic = true;
  d.instances.push_back(inst);
}

}  // namespace niv::fixtures
