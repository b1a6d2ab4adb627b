#include "niv/scene.hpp"

#include <algorithm>
#include <string>

#include "niv/error.hpp"
#include "niv/sampling.hpp"

namespace niv {

Vec3 rotate_axis_angle(const Vec3& v, const Vec3& axis, double degrees) {
  if (degrees == 0) return v;
  const Vec3 k = normalize(axis);
  const double a = degrees * kPi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  // Rodrigues
  return v * c + cross(k, v) * s + k * (dot(k, v) * (1 - c));
}

Vec3 Transform::apply_point(const Vec3& p) const {
  return rotate_axis_angle(p * scale, rotation_axis, rotation_degrees) + translate;
}

Vec3 Transform::apply_normal(const Vec3& n) const {
  return normalize(rotate_axis_angle(n, rotation_axis, rotation_degrees));
}

namespace {

void validate_rgb(const Rgb& c, const std::string& what, double lo, double hi) {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(c[i]) || c[i] < lo || c[i] > hi) {
      if (hi <= 1.0) throw InputError(what + " out of [0,1]");
      throw InputError(what + " must be finite and >= 0");
    }
  }
}

void validate(const SceneDesc& d) {
  for (const auto& m : d.materials) {
    validate_rgb(m.albedo, "material '" + m.id + "': albedo", 0.0, 1.0);
    validate_rgb(m.emission, "material '" + m.id + "': emission", 0.0,
                 std::numeric_limits<double>::max());
  }
  for (const auto& mesh : d.meshes) {
    if (mesh.indices.empty()) throw InputError("mesh '" + mesh.id + "': empty mesh");
    if (mesh.indices.size() % 3 != 0)
      throw InputError("mesh '" + mesh.id + "': index count not a multiple of 3");
    for (const auto& p : mesh.positions)
      if (!is_finite(p)) throw InputError("mesh '" + mesh.id + "': non-finite vertex");
    for (uint32_t i : mesh.indices)
      if (i >= mesh.positions.size())
        throw InputError("mesh '" + mesh.id + "': vertex index out of range");
    if (!mesh.normals.empty() && mesh.normals.size() != mesh.positions.size())
      throw InputError("mesh '" + mesh.id + "': normal count mismatch");
  }
  for (const auto& inst : d.instances) {
    if (inst.mesh >= d.meshes.size()) throw InputError("instance references unknown mesh");
    if (inst.material >= d.materials.size())
      throw InputError("instance references unknown material");
    if (!(inst.transform.scale > 0) || !std::isfinite(inst.transform.scale))
      throw InputError("instance transform must have positive finite scale");
  }
  for (const auto& e : d.emitters) {
    validate_rgb(e.radiance, "emitter radiance", 0.0, std::numeric_limits<double>::max());
    if (e.type == Emitter::Type::directional && !(length(e.direction) > 0))
      throw InputError("directional emitter needs a non-zero direction");
  }
  for (const auto& p : d.variable_params) {
    if (p.emitter >= static_cast<int>(d.emitters.size()))
      throw InputError("variable param '" + p.name + "' references unknown emitter");
    if (p.emitter >= 0 && d.emitters[p.emitter].type != Emitter::Type::directional)
      throw InputError("variable param '" + p.name + "' must target a directional emitter");
  }
}

std::vector<Triangle> flatten(const SceneDesc& d, bool dynamic) {
  std::vector<Triangle> out;
  for (uint32_t ii = 0; ii < d.instances.size(); ++ii) {
    const Instance& inst = d.instances[ii];
    if (inst.dynamic != dynamic) continue;
    const Mesh& mesh = d.meshes[inst.mesh];
    const bool smooth = !mesh.normals.empty();
    for (size_t f = 0; f < mesh.triangle_count(); ++f) {
      const uint32_t i0 = mesh.indices[3 * f], i1 = mesh.indices[3 * f + 1],
                     i2 = mesh.indices[3 * f + 2];
      Triangle t;
      t.p0 = inst.transform.apply_point(mesh.positions[i0]);
      t.p1 = inst.transform.apply_point(mesh.positions[i1]);
      t.p2 = inst.transform.apply_point(mesh.positions[i2]);
      const Vec3 c = cross(t.p1 - t.p0, t.p2 - t.p0);
      t.area = 0.5 * length(c);
      t.ng = t.area > 0 ? normalize(c) : Vec3(0, 0, 1);
      if (smooth) {
        t.n0 = inst.transform.apply_normal(mesh.normals[i0]);
        t.n1 = inst.transform.apply_normal(mesh.normals[i1]);
        t.n2 = inst.transform.apply_normal(mesh.normals[i2]);
      } else {
        t.n0 = t.n1 = t.n2 = t.ng;
      }
      t.material = static_cast<uint32_t>(inst.material);
      t.instance = ii;
      out.push_back(t);
    }
  }
  return out;
}

}  // namespace

SurfaceSample Scene::AreaDistribution::sample(const Scene& s, double u1, double u2,
                                              double u3) const {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u3);
  const size_t k = std::min<size_t>(static_cast<size_t>(it - cdf.begin()), triangles.size() - 1);
  const Triangle& tri = s.triangle(triangles[k]);
  const auto [b1, b2] = uniform_sample_triangle(u1, u2);
  return {tri.point(b1, b2), tri.shading_normal(b1, b2), 1.0 / total_area, triangles[k]};
}

Scene::Scene(SceneDesc desc) {
  validate(desc);
  auto geo = std::make_shared<Geometry>();
  geo->statics = TriangleSet(flatten(desc, false));
  geo->dynamics = TriangleSet(flatten(desc, true));

  Bounds3 box = geo->statics.empty() ? geo->dynamics.bounds() : geo->statics.bounds();
  if (box.empty()) box = Bounds3{{0, 0, 0}, {1, 1, 1}};
  const Vec3 e = box.extent();
  const double largest = std::max({e.x, e.y, e.z});
  const double min_extent = largest > 0 ? 1e-3 * largest : 1e-3;
  for (int a = 0; a < 3; ++a) {
    if (box.hi[a] - box.lo[a] < min_extent) {
      const double c = 0.5 * (box.hi[a] + box.lo[a]);
      box.lo[a] = c - 0.5 * min_extent;
      box.hi[a] = c + 0.5 * min_extent;
    }
  }
  geo->bbox = box;
  geo->ray_epsilon = 1e-4 * box.diagonal();

  const auto n_static = static_cast<uint32_t>(geo->statics.size());
  auto add = [](AreaDistribution& dist, const TriangleSet& set, uint32_t offset, auto&& accept) {
    for (uint32_t i = 0; i < set.size(); ++i) {
      if (set[i].area > 0 && accept(set[i])) {
        dist.triangles.push_back(i + offset);
        dist.total_area += set[i].area;
        dist.cdf.push_back(dist.total_area);
      }
    }
  };
  auto any = [](const Triangle&) { return true; };
  auto is_light = [&](const Triangle& t) { return desc.materials[t.material].emissive(); };
  add(geo->static_surface, geo->statics, 0, any);
  add(geo->static_lights, geo->statics, 0, is_light);
  add(geo->all_lights, geo->statics, 0, is_light);
  add(geo->all_lights, geo->dynamics, n_static, is_light);
  for (AreaDistribution* d : {&geo->static_surface, &geo->static_lights, &geo->all_lights}) {
    for (double& c : d->cdf) c /= d->total_area;
    if (!d->cdf.empty()) d->cdf.back() = 1.0;
  }
  geo->static_area = geo->static_surface.total_area;

  emitters_ = desc.emitters;
  for (auto& em : emitters_)
    if (em.type == Emitter::Type::directional) em.direction = normalize(em.direction);
  desc_ = std::make_shared<const SceneDesc>(std::move(desc));
  geo_ = std::move(geo);
}

const Triangle& Scene::triangle(uint32_t global_id) const {
  const auto n_static = static_cast<uint32_t>(geo_->statics.size());
  return global_id < n_static ? geo_->statics[global_id] : geo_->dynamics[global_id - n_static];
}

std::optional<SurfaceHit> Scene::intersect(GeometrySet set, const Ray& ray, double t_max) const {
  std::optional<TriangleHit> hs, hd;
  if (set != GeometrySet::dynamic_only) hs = geo_->statics.intersect(ray, t_max);
  if (set != GeometrySet::static_only)
    hd = geo_->dynamics.intersect(ray, hs ? std::nextafter(hs->t, kInfinity) : t_max);
  // Static ids are lower, so they win ties.
  const bool use_dynamic = hd && (!hs || hd->t < hs->t);
  const std::optional<TriangleHit>& h = use_dynamic ? hd : hs;
  if (!h) return std::nullopt;
  const Triangle& tri = use_dynamic ? geo_->dynamics[h->index] : geo_->statics[h->index];
  SurfaceHit hit;
  hit.t = h->t;
  hit.position = tri.point(h->b1, h->b2);
  hit.geometric_normal = tri.ng;
  hit.shading_normal = tri.shading_normal(h->b1, h->b2);
  hit.material = tri.material;
  hit.triangle =
      use_dynamic ? static_cast<uint32_t>(geo_->statics.size()) + h->index : h->index;
  hit.is_backface = dot(ray.dir, tri.ng) > 0;
  hit.dynamic = use_dynamic;
  return hit;
}

bool Scene::occluded(GeometrySet set, const Ray& ray, double t_max) const {
  if (set != GeometrySet::dynamic_only && geo_->statics.occluded(ray, t_max)) return true;
  if (set != GeometrySet::static_only && geo_->dynamics.occluded(ray, t_max)) return true;
  return false;
}

SurfaceSample Scene::sample_surface(double u1, double u2, double u3) const {
  if (geo_->static_surface.empty()) throw InputError("no sampleable surface");
  return geo_->static_surface.sample(*this, u1, u2, u3);
}

bool Scene::has_area_lights(GeometrySet set) const {
  return set == GeometrySet::static_only ? !geo_->static_lights.empty()
                                         : !geo_->all_lights.empty();
}

SurfaceSample Scene::sample_area_light(GeometrySet set, double u1, double u2, double u3) const {
  const AreaDistribution& d =
      set == GeometrySet::static_only ? geo_->static_lights : geo_->all_lights;
  return d.sample(*this, u1, u2, u3);
}

Scene Scene::configured(std::span<const double> params) const {
  if (params.size() != param_count())
    throw InputError("scene expects " + std::to_string(param_count()) +
                     " variable parameter(s), got " + std::to_string(params.size()));
  Scene out = *this;
  for (size_t i = 0; i < params.size(); ++i) {
    const VariableParam& p = desc_->variable_params[i];
    if (p.emitter < 0) continue;
    const double angle = p.min + params[i] * (p.max - p.min);
    out.emitters_[p.emitter].direction =
        normalize(rotate_axis_angle(normalize(desc_->emitters[p.emitter].direction), p.axis, angle));
  }
  return out;
}

}  // namespace niv
