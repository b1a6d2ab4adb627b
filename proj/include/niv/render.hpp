#pragma once

#include <cstdint>
#include <vector>

#include "niv/neural_field.hpp"
#include "niv/provider.hpp"
#include "niv/scene.hpp"
#include "niv/tracer.hpp"

namespace niv {

struct GBuffer {
  int width = 0, height = 0;
  std::vector<Vec3> position;  // hit point lifted by ray_epsilon off the surface
  std::vector<Vec3> normal;    // shading normal facing the camera
  std::vector<Vec3> view;      // primary ray direction
  std::vector<Rgb> albedo;
  std::vector<Rgb> emission;   // zero when seen from the back
  std::vector<MaterialKind> kind;
  std::vector<uint8_t> dynamic;
  std::vector<uint8_t> coverage;

  GBuffer() = default;
  GBuffer(int w, int h);
  size_t size() const { return static_cast<size_t>(width) * height; }
};

GBuffer rasterize_gbuffer(const Scene& scene, const Camera& cam, int width, int height);

struct AoOptions {
  bool enabled = false;
  int rays = 32;
  double max_distance_fraction = 0.1;  // of the static bbox diagonal
};

struct ShadeOptions {
  const IrradianceProvider* provider = nullptr;
  std::vector<double> params;
  bool half_resolution = false;
  AoOptions ao;
  bool specular_defer = false;
  int specular_depth = 4;
  int env_rays = 16;       // direct term, environment visibility
  int light_samples = 16;  // direct term, area-light NEE
  uint64_t seed = 0;
};

// Per-pixel breakdown, for debugging dumps.
struct ShadeAovs {
  FrameHDR irradiance, direct, ao;
};

// 1 - cosine-weighted occlusion by dynamic geometry, attenuated linearly to
// zero at max_distance.
double dynamic_ao(const Scene& scene, const Vec3& x, const Vec3& n, int rays, double max_distance, Rng& rng);

// L = albedo/pi * E * AO + albedo/pi * D + emission on diffuse surfaces;
// environment where nothing is hit.
FrameHDR shade_deferred(const GBuffer& gb, const Scene& scene, const ShadeOptions& opt,
                        ShadeAovs* aovs = nullptr, size_t* provider_queries = nullptr);

// Indirect term estimated per pixel from an incident-radiance model:
// (1/S) sum pi * L_i(x, w_s) over cosine-sampled w_s. `opt.provider` is unused.
FrameHDR shade_sampled_incident(const GBuffer& gb, const Scene& scene, const NeuralField& model, int spp,
                                const ShadeOptions& opt, ShadeAovs* aovs = nullptr);

}  // namespace niv
