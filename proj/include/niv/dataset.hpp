#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "niv/scene_io.hpp"
#include "niv/tracer.hpp"

namespace niv {

inline constexpr size_t kMaxExtraParams = 2;

enum class TargetQuantity : uint32_t { irradiance = 0, incident_radiance = 1 };

// One record. Stored in f32 exactly as in the file so a loaded set is
// indistinguishable from a freshly baked one.
struct IrradianceSample {
  std::array<float, 3> position{};  // normalized to the unit cube by SampleSet::bbox
  std::array<float, 3> direction{};
  std::array<float, kMaxExtraParams> params{};
  std::array<float, 3> target{};
  bool on_surface = false;
  float backface_fraction = 0;  // quantized to 16 bits
};

struct SampleSet {
  std::vector<IrradianceSample> samples;
  Digest scene_hash{};
  uint32_t spp = 0;
  uint64_t seed = 0;
  float surface_fraction = 0;
  uint32_t n_extra_params = 0;
  TargetQuantity quantity = TargetQuantity::irradiance;
  Bounds3 bbox;  // f32-representable

  size_t surface_count() const;
  // World-space position of sample i.
  Vec3 world_position(size_t i) const;
};

// Draws extra-parameter values for each sample. `anchors` switches from
// uniform [0,1] draws to a uniform pick among fixed values.
struct ParamSampler {
  uint32_t count = 0;
  std::vector<double> anchors;

  std::array<double, kMaxExtraParams> draw(Rng& rng) const;
};

struct BakeConfig {
  size_t n_samples = 65536;
  double surface_fraction = 0.2;
  TracerConfig tracer;
  uint64_t seed = 0;
  bool cull = true;         // drop volume samples inside geometry
  int max_retries = 64;     // per slot
  TargetQuantity quantity = TargetQuantity::irradiance;
  std::optional<ParamSampler> params;
  Digest scene_hash{};
};

using ProgressFn = std::function<void(size_t done, size_t total)>;

SampleSet bake_dataset(const Scene& scene, const BakeConfig& cfg, const ProgressFn& progress = {});

// Quantizes a bounding box to f32 (the on-disk representation).
Bounds3 f32_bounds(const Bounds3& b);
Vec3 to_unit_cube(const Bounds3& bbox, const Vec3& p);
Vec3 from_unit_cube(const Bounds3& bbox, const Vec3& u);

void save_samples(const SampleSet& set, const std::filesystem::path& path);
SampleSet load_samples(const std::filesystem::path& path);

}  // namespace niv
