#include "niv/tracer.hpp"

#include <sstream>

#include "niv/error.hpp"
#include "niv/parallel.hpp"
#include "niv/sampling.hpp"

namespace niv {

void TracerConfig::validate() const {
  if (spp < 1) throw InputError("tracer: spp must be >= 1");
  if (max_depth < 2) throw InputError("tracer: max depth must be >= 2");
  if (rr_start_depth < 1) throw InputError("tracer: rr start depth must be >= 1");
  if (!(rr_min_prob > 0 && rr_min_prob <= 1)) throw InputError("tracer: rr min prob must be in (0,1]");
}

namespace {

[[noreturn]] void nan_error(const Vec3& x, const Vec3& n, uint32_t sample) {
  std::ostringstream os;
  os << "NaN in estimator at x=(" << x.x << ", " << x.y << ", " << x.z << ") n=(" << n.x << ", "
     << n.y << ", " << n.z << ") sample " << sample;
  throw NumericalError(os.str());
}

// Normals facing the side the ray arrived from; surfaces shade two-sided.
struct Facing {
  Vec3 ng, ns;
};
Facing facing(const SurfaceHit& h) {
  return h.is_backface ? Facing{-h.geometric_normal, -h.shading_normal}
                       : Facing{h.geometric_normal, h.shading_normal};
}

// Radiance along `ray`. With `primary`, emission and environment seen at the
// first vertex count; otherwise the path contributes only after a bounce.
Rgb trace_path(const Scene& scene, Ray ray, const TracerConfig& cfg, Rng& rng,
               GeometrySet geometry, bool primary, bool* first_backface) {
  const double eps = scene.ray_epsilon();
  const DirectOptions direct{geometry, 1, 1};
  Rgb L, beta = Rgb::splat(1.0);
  bool emission_visible = primary;  // only until the first diffuse vertex (NEE takes over)
  for (int depth = 1; depth <= cfg.max_depth; ++depth) {
    const auto hit = scene.intersect(geometry, ray);
    if (depth == 1 && first_backface) *first_backface = hit && hit->is_backface;
    if (!hit) {
      if (emission_visible) L += beta * environment_radiance(scene);
      break;
    }
    const Material& mat = scene.material(hit->material);
    if (emission_visible && !hit->is_backface) L += beta * mat.emission;
    const Facing f = facing(*hit);
    if (mat.kind == MaterialKind::mirror) {
      beta *= mat.albedo;
      const Vec3 d = normalize(reflect(ray.dir, f.ns));
      ray = {hit->position + f.ng * eps, d};
      emission_visible = true;
      if (is_black(beta)) break;
      continue;
    }
    emission_visible = false;
    L += beta * mat.albedo * kInvPi * direct_irradiance(scene, hit->position, f.ns, rng, direct);
    beta *= mat.albedo;
    if (is_black(beta)) break;
    if (depth >= cfg.rr_start_depth) {
      const double q = std::clamp(luminance(beta), cfg.rr_min_prob, 1.0);
      if (rng.uniform() >= q) break;
      beta = beta / q;
    }
    const double u1 = rng.uniform(), u2 = rng.uniform();
    ray = {hit->position + f.ng * eps, cosine_sample_hemisphere(f.ns, u1, u2)};
  }
  return L;
}

struct Accum {
  Rgb sum, sum_sq;
  void add(const Rgb& c) {
    sum += c;
    sum_sq += c * c;
  }
  IndirectEstimate finish(uint32_t n, double backface) const {
    IndirectEstimate e;
    e.value = sum / n;
    e.backface_fraction = backface / n;
    if (n > 1) {
      for (int c = 0; c < 3; ++c)
        e.variance[c] = std::max(0.0, (sum_sq[c] - sum[c] * sum[c] / n) / (double(n) * (n - 1)));
    }
    return e;
  }
};

}  // namespace

Rgb environment_radiance(const Scene& scene) {
  Rgb L;
  for (const auto& e : scene.emitters())
    if (e.type == Emitter::Type::environment) L += e.radiance;
  return L;
}

Rgb direct_irradiance(const Scene& scene, const Vec3& x, const Vec3& n, Rng& rng,
                      const DirectOptions& opt) {
  const double eps = scene.ray_epsilon();
  const Vec3 origin = x + n * eps;
  Rgb E;
  for (const auto& em : scene.emitters()) {
    if (em.type == Emitter::Type::directional) {
      const double c = -dot(em.direction, n);
      if (c <= 0) continue;
      if (!scene.occluded(opt.geometry, {origin, -em.direction}, Scene::kInfinity))
        E += em.radiance * c;
    } else {
      if (is_black(em.radiance)) continue;
      int open = 0;
      for (int i = 0; i < opt.env_rays; ++i) {
        const double u1 = rng.uniform(), u2 = rng.uniform();
        const Vec3 d = cosine_sample_hemisphere(n, u1, u2);
        if (!scene.occluded(opt.geometry, {origin, d}, Scene::kInfinity)) ++open;
      }
      E += em.radiance * (kPi * open / opt.env_rays);
    }
  }
  if (scene.has_area_lights(opt.geometry)) {
    Rgb sum;
    for (int i = 0; i < opt.light_samples; ++i) {
      const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
      const SurfaceSample ls = scene.sample_area_light(opt.geometry, u1, u2, u3);
      const Vec3 to = ls.position - origin;
      const double d2 = dot(to, to);
      if (d2 <= 0) continue;
      const double dist = std::sqrt(d2);
      const Vec3 w = to / dist;
      const double cos_x = dot(w, n);
      const Triangle& tri = scene.triangle(ls.triangle);
      const double cos_y = -dot(w, tri.ng);  // one-sided emitters
      if (cos_x <= 0 || cos_y <= 0) continue;
      if (scene.occluded(opt.geometry, {origin, w}, dist - eps)) continue;
      sum += scene.material(tri.material).emission * (cos_x * cos_y / (d2 * ls.pdf));
    }
    E += sum / opt.light_samples;
  }
  return E;
}

Rgb reflected_radiance(const Scene& scene, const Ray& ray, const TracerConfig& cfg, Rng& rng,
                       GeometrySet geometry, bool* first_backface) {
  return trace_path(scene, ray, cfg, rng, geometry, false, first_backface);
}

IndirectEstimate indirect_irradiance(const Scene& scene, const Vec3& x, const Vec3& n,
                                     const TracerConfig& cfg, Rng& rng, GeometrySet geometry) {
  const Vec3 origin = x + n * scene.ray_epsilon();
  Accum acc;
  double backface = 0;
  for (uint32_t s = 0; s < cfg.spp; ++s) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    bool back = false;
    const Rgb L = trace_path(scene, {origin, cosine_sample_hemisphere(n, u1, u2)}, cfg, rng,
                             geometry, false, &back);
    if (!is_finite(L)) nan_error(x, n, s);
    acc.add(L * kPi);
    backface += back;
  }
  return acc.finish(cfg.spp, backface);
}

IndirectEstimate incident_radiance(const Scene& scene, const Vec3& x, const Vec3& w,
                                   const TracerConfig& cfg, Rng& rng, GeometrySet geometry) {
  Accum acc;
  double backface = 0;
  for (uint32_t s = 0; s < cfg.spp; ++s) {
    bool back = false;
    const Rgb L = trace_path(scene, {x, w}, cfg, rng, geometry, false, &back);
    if (!is_finite(L)) nan_error(x, w, s);
    acc.add(L);
    backface += back;
  }
  return acc.finish(cfg.spp, backface);
}

Ray camera_ray(const Camera& cam, int width, int height, double px, double py) {
  const Vec3 forward = normalize(cam.look_at - cam.origin);
  const Vec3 right = normalize(cross(forward, cam.up));
  const Vec3 up = cross(right, forward);
  const double th = std::tan(0.5 * cam.fov_y_degrees * kPi / 180.0);
  const double aspect = double(width) / height;
  const double sx = (2 * (px + 0.5) / width - 1) * th * aspect;
  const double sy = (1 - 2 * (py + 0.5) / height) * th;
  return {cam.origin, normalize(forward + right * sx + up * sy)};
}

FrameHDR reference_render(const Scene& scene, const Camera& cam, int width, int height,
                          const ReferenceOptions& opt, FrameHDR* variance) {
  opt.tracer.validate();
  FrameHDR img(width, height);
  if (variance) *variance = FrameHDR(width, height);
  parallel_for(static_cast<size_t>(width) * height, [&](size_t i) {
    const int px = static_cast<int>(i % width), py = static_cast<int>(i / width);
    Rng rng = Rng::keyed(stream_key(opt.seed, i, 0x7265'6672ull));
    const Ray ray = camera_ray(cam, width, height, px, py);
    Accum acc;
    for (uint32_t s = 0; s < opt.tracer.spp; ++s) {
      const Rgb L = trace_path(scene, ray, opt.tracer, rng, GeometrySet::both, true, nullptr);
      if (!is_finite(L)) nan_error(ray.origin, ray.dir, s);
      acc.add(L);
    }
    const IndirectEstimate e = acc.finish(opt.tracer.spp, 0);
    img.pixels[i] = e.value;
    if (variance) variance->pixels[i] = e.variance;
  }, 16);
  return img;
}

}  // namespace niv
