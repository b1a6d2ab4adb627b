#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "niv/bvh.hpp"
#include "niv/math.hpp"

namespace niv {

enum class MaterialKind : uint8_t { diffuse, mirror };

struct Material {
  std::string id;
  Rgb albedo = Rgb::splat(0.5);
  Rgb emission;
  MaterialKind kind = MaterialKind::diffuse;

  bool emissive() const { return !is_black(emission); }
};

// Non-geometric light. Area lights are emissive materials on geometry.
struct Emitter {
  enum class Type : uint8_t { directional, environment };
  Type type = Type::environment;
  Vec3 direction{0, -1, 0};  // propagation direction, unit
  Rgb radiance;
};

struct Mesh {
  std::string id;
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;  // empty, or one per position
  std::vector<uint32_t> indices;

  size_t triangle_count() const { return indices.size() / 3; }
};

// p' = rotate(scale * p) + translate
struct Transform {
  Vec3 translate;
  Vec3 rotation_axis{0, 1, 0};
  double rotation_degrees = 0;
  double scale = 1;

  Vec3 apply_point(const Vec3& p) const;
  Vec3 apply_normal(const Vec3& n) const;
};

Vec3 rotate_axis_angle(const Vec3& v, const Vec3& axis, double degrees);

struct Instance {
  size_t mesh = 0;
  size_t material = 0;
  Transform transform;
  bool dynamic = false;
};

struct Camera {
  Vec3 origin{0, 0, 1};
  Vec3 look_at{0, 0, 0};
  Vec3 up{0, 1, 0};
  double fov_y_degrees = 40;
};

// A scalar in [0,1] that reconfigures the scene (e.g. a sun angle). When bound
// to a directional emitter, value v rotates the emitter's base direction about
// `axis` by min + v * (max - min) degrees.
struct VariableParam {
  std::string name;
  double min = 0;
  double max = 1;
  int emitter = -1;
  Vec3 axis{0, 0, 1};
};

// Everything needed to build a Scene; what the JSON loader produces.
struct SceneDesc {
  std::vector<Mesh> meshes;
  std::vector<Material> materials;
  std::vector<Instance> instances;
  std::vector<Emitter> emitters;
  std::optional<Camera> camera;
  std::vector<VariableParam> variable_params;
};

enum class GeometrySet : uint8_t { static_only, dynamic_only, both };

struct SurfaceHit {
  double t = 0;
  Vec3 position;
  Vec3 geometric_normal;  // from winding, unit
  Vec3 shading_normal;    // unit, same hemisphere as geometric_normal
  uint32_t material = 0;
  uint32_t triangle = 0;  // global id: static first, then dynamic
  bool is_backface = false;
  bool dynamic = false;
};

struct SurfaceSample {
  Vec3 position;
  Vec3 normal;
  double pdf = 0;  // per unit area
  uint32_t triangle = 0;
};

class Scene {
 public:
  explicit Scene(SceneDesc desc);

  const SceneDesc& desc() const { return *desc_; }
  const std::vector<Material>& materials() const { return desc_->materials; }
  const Material& material(uint32_t id) const { return desc_->materials[id]; }
  const std::vector<Emitter>& emitters() const { return emitters_; }
  const std::optional<Camera>& camera() const { return desc_->camera; }
  const std::vector<VariableParam>& variable_params() const { return desc_->variable_params; }
  size_t param_count() const { return desc_->variable_params.size(); }

  // Axis-aligned bounds of static geometry. Degenerate axes are padded so the
  // box always has positive volume.
  const Bounds3& bbox() const { return geo_->bbox; }
  double ray_epsilon() const { return geo_->ray_epsilon; }

  const TriangleSet& static_triangles() const { return geo_->statics; }
  const TriangleSet& dynamic_triangles() const { return geo_->dynamics; }
  const Triangle& triangle(uint32_t global_id) const;

  std::optional<SurfaceHit> intersect(GeometrySet set, const Ray& ray,
                                      double t_max = kInfinity) const;
  bool occluded(GeometrySet set, const Ray& ray, double t_max) const;

  // Uniform-area point on static geometry; u3 picks the triangle.
  SurfaceSample sample_surface(double u1, double u2, double u3) const;
  double static_area() const { return geo_->static_area; }

  // Emissive triangles usable for next-event estimation.
  bool has_area_lights(GeometrySet set) const;
  // Uniform-area point on the emissive triangles of `set`.
  SurfaceSample sample_area_light(GeometrySet set, double u1, double u2, double u3) const;

  // Same geometry, emitters reconfigured for the given variable-param values.
  Scene configured(std::span<const double> params) const;

  static constexpr double kInfinity = std::numeric_limits<double>::infinity();

 private:
  struct AreaDistribution {
    std::vector<uint32_t> triangles;  // global ids
    std::vector<double> cdf;          // normalized
    double total_area = 0;
    bool empty() const { return triangles.empty(); }
    SurfaceSample sample(const Scene& s, double u1, double u2, double u3) const;
  };
  struct Geometry {
    TriangleSet statics;
    TriangleSet dynamics;
    Bounds3 bbox;
    double ray_epsilon = 1e-4;
    double static_area = 0;
    AreaDistribution static_surface;
    AreaDistribution static_lights;
    AreaDistribution all_lights;
  };

  std::shared_ptr<const SceneDesc> desc_;
  std::shared_ptr<const Geometry> geo_;
  std::vector<Emitter> emitters_;
};

// Offset a point off a surface along the side of `n` that `dir` leaves from.
inline Vec3 offset_ray_origin(const Vec3& p, const Vec3& n, const Vec3& dir, double eps) {
  return dot(dir, n) >= 0 ? p + n * eps : p - n * eps;
}

}  // namespace niv
