#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "niv/math.hpp"
#include "niv/dataset.hpp"
#include "niv/rng.hpp"
#include "niv/scene.hpp"
#include "niv/tracer.hpp"

namespace niv {

// Real SH, bands 0..2: Y00, Y1-1 (y), Y10 (z), Y11 (x), Y2-2 (xy), Y2-1 (yz),
// Y20, Y21 (xz), Y22.
std::array<double, 9> sh_basis(const Vec3& n);

// Clamped-cosine convolution scale per band.
inline constexpr std::array<double, 3> kShCosineBand = {kPi, 2 * kPi / 3, kPi / 4};
inline constexpr int sh_band(int k) { return k == 0 ? 0 : (k < 4 ? 1 : 2); }

struct ShIrradiance {
  std::array<std::array<float, 3>, 9> c{};  // [coefficient][channel]

  Rgb eval(const Vec3& n) const;
  bool operator==(const ShIrradiance&) const = default;
};

// Radiance arriving at x from direction w. The baker uses the tracer; tests
// inject synthetic fields.
using RadianceFn = std::function<Rgb(const Vec3& x, const Vec3& w, Rng& rng, bool* backface)>;

struct ProbeBakeConfig {
  uint32_t directions = 1024;  // radiance samples per probe, stratified over the sphere
  TracerConfig tracer;         // spp is ignored: one path per direction
  uint64_t seed = 0;
  // Project sampled irradiance instead of radiance + cosine convolution.
  bool project_irradiance = false;
  uint32_t irradiance_spp = 64;  // only used with project_irradiance
};

struct ProbeBake {
  ShIrradiance sh;
  double backface_fraction = 0;
  bool inside() const { return backface_fraction > 0.5; }
};

ProbeBake project_probe(const RadianceFn& radiance, const Vec3& x, uint32_t directions, Rng& rng);
ProbeBake bake_probe(const Scene& scene, const Vec3& x, const ProbeBakeConfig& cfg, Rng& rng);

struct ProbeHeuristics {
  bool cosine_falloff = true;
  double falloff_exponent = 1.0;
  double weight_clamp = 1e-6;
  bool rt_visibility = false;
};

class ProbeGrid {
 public:
  static constexpr size_t kBytesPerProbe = 54;

  ProbeGrid() = default;
  ProbeGrid(std::array<int, 3> dims, const Bounds3& bbox);

  const std::array<int, 3>& dims() const { return dims_; }
  const Bounds3& bbox() const { return bbox_; }
  size_t probe_count() const { return probes_.size(); }
  size_t index(int i, int j, int k) const { return size_t(i) + size_t(dims_[0]) * (size_t(j) + size_t(dims_[1]) * k); }
  Vec3 position(int i, int j, int k) const;
  ShIrradiance& probe(size_t i) { return probes_[i]; }
  const ShIrradiance& probe(size_t i) const { return probes_[i]; }
  size_t memory_bytes() const { return probes_.size() * kBytesPerProbe; }

  ProbeHeuristics heuristics;
  // Probes whose bake saw mostly back faces (inside geometry).
  std::vector<uint32_t> flagged;

  struct Weights {
    std::array<size_t, 8> probe;
    std::array<double, 8> weight;  // clamped and normalized
  };
  // `scene` is only consulted for ray-traced visibility.
  Weights weights(const Vec3& x, const Vec3& n, const Scene* scene = nullptr) const;
  Rgb query(const Vec3& x, const Vec3& n, const Scene* scene = nullptr) const;

  void quantize_f16();

 private:
  std::array<int, 3> dims_{};
  Bounds3 bbox_;
  std::vector<ShIrradiance> probes_;
};

ProbeGrid bake_grid(const Scene& scene, std::array<int, 3> dims, const ProbeBakeConfig& cfg,
                    const ProgressFn& progress = {});

// Largest n with n^3 probes fitting the byte budget (at least 2).
int cubic_dims_for_budget(size_t bytes);

void save_grid(const ProbeGrid& grid, const std::filesystem::path& path);
ProbeGrid load_grid(const std::filesystem::path& path);
size_t grid_header_bytes();

}  // namespace niv
