#pragma once

#include <cstdint>
#include <vector>

#include "niv/rng.hpp"
#include "niv/scene.hpp"

namespace niv {

struct TracerConfig {
  uint32_t spp = 64;
  int max_depth = 16;
  int rr_start_depth = 3;
  double rr_min_prob = 0.05;

  void validate() const;
};

struct DirectOptions {
  GeometrySet geometry = GeometrySet::static_only;
  int env_rays = 1;        // cosine shadow rays for the environment term
  int light_samples = 1;   // area-light NEE samples
};

// Irradiance at x (normal n) from emitters with no intermediate bounce:
// directional, constant environment and emissive triangles.
Rgb direct_irradiance(const Scene& scene, const Vec3& x, const Vec3& n, Rng& rng,
                      const DirectOptions& opt = {});

// Radiance arriving at ray.origin from ray.dir after at least one bounce,
// i.e. excluding emission of (and environment behind) the first vertex.
// `first_backface` receives whether the first hit saw a back face.
Rgb reflected_radiance(const Scene& scene, const Ray& ray, const TracerConfig& cfg, Rng& rng,
                       GeometrySet geometry = GeometrySet::static_only,
                       bool* first_backface = nullptr);

struct IndirectEstimate {
  Rgb value;
  double backface_fraction = 0;
  Rgb variance;  // of the mean, per channel
};

// Indirect irradiance E(x, n): cosine-sampled gathering of reflected radiance.
IndirectEstimate indirect_irradiance(const Scene& scene, const Vec3& x, const Vec3& n,
                                     const TracerConfig& cfg, Rng& rng,
                                     GeometrySet geometry = GeometrySet::static_only);

// Indirect incident radiance L_i(x, w), averaged over cfg.spp paths.
IndirectEstimate incident_radiance(const Scene& scene, const Vec3& x, const Vec3& w,
                                   const TracerConfig& cfg, Rng& rng,
                                   GeometrySet geometry = GeometrySet::static_only);

// Linear HDR image, row-major, row 0 at the top.
struct FrameHDR {
  int width = 0, height = 0;
  std::vector<Rgb> pixels;

  FrameHDR() = default;
  FrameHDR(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h) {}
  Rgb& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

// Pinhole camera ray through the centre of pixel (px, py).
Ray camera_ray(const Camera& cam, int width, int height, double px, double py);

struct ReferenceOptions {
  TracerConfig tracer;  // spp = samples per pixel
  uint64_t seed = 0;
};

// Full path-traced image of static + dynamic geometry, mirrors included.
// `variance` (optional) receives the per-pixel variance of the mean.
FrameHDR reference_render(const Scene& scene, const Camera& cam, int width, int height,
                          const ReferenceOptions& opt, FrameHDR* variance = nullptr);

// Sum of constant environment radiance; what a primary miss sees.
Rgb environment_radiance(const Scene& scene);

}  // namespace niv
