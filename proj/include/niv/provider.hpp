#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>

#include "niv/neural_field.hpp"
#include "niv/probes.hpp"
#include "niv/scene.hpp"
#include "niv/tracer.hpp"

namespace niv {

struct ProviderQuery {
  Vec3 position;
  Vec3 normal;
  std::array<double, kMaxExtraParams> params{};
};

// Anything that answers indirect irradiance E(x, n [, params]). Implementations
// are immutable after construction and safe to call from many threads.
class IrradianceProvider {
 public:
  virtual ~IrradianceProvider() = default;
  virtual std::string kind() const = 0;
  virtual uint32_t param_count() const = 0;
  virtual size_t memory_bytes() const = 0;
  virtual void query(std::span<const ProviderQuery> q, std::span<Rgb> out) const = 0;

  // Throws InputError unless `n` extra parameters are what the provider takes.
  void check_params(size_t n) const;
};

class NivProvider : public IrradianceProvider {
 public:
  NivProvider(NeuralField model, Precision storage = Precision::f16);
  std::string kind() const override { return "niv"; }
  uint32_t param_count() const override { return model_.config().n_params; }
  size_t memory_bytes() const override { return model_.memory_bytes(storage_); }
  void query(std::span<const ProviderQuery> q, std::span<Rgb> out) const override;
  const NeuralField& model() const { return model_; }

 private:
  NeuralField model_;
  Precision storage_;
};

class ProbeProvider : public IrradianceProvider {
 public:
  // `scene` is only used for ray-traced visibility and must outlive this.
  ProbeProvider(ProbeGrid grid, const Scene* scene = nullptr);
  std::string kind() const override { return grid_.heuristics.rt_visibility ? "probes_rt" : "probes"; }
  uint32_t param_count() const override { return 0; }
  size_t memory_bytes() const override { return grid_.memory_bytes(); }
  void query(std::span<const ProviderQuery> q, std::span<Rgb> out) const override;
  const ProbeGrid& grid() const { return grid_; }

 private:
  ProbeGrid grid_;
  const Scene* scene_;
};

// Path-traced E per query; query i uses the stream (seed, i).
class OracleProvider : public IrradianceProvider {
 public:
  OracleProvider(const Scene& scene, TracerConfig cfg, uint64_t seed);
  std::string kind() const override { return "oracle"; }
  uint32_t param_count() const override { return static_cast<uint32_t>(scene_.param_count()); }
  size_t memory_bytes() const override { return 0; }
  void query(std::span<const ProviderQuery> q, std::span<Rgb> out) const override;

 private:
  const Scene& scene_;
  TracerConfig cfg_;
  uint64_t seed_;
};

class ConstantProvider : public IrradianceProvider {
 public:
  explicit ConstantProvider(Rgb value, uint32_t params = 0) : value_(value), params_(params) {}
  std::string kind() const override { return "constant"; }
  uint32_t param_count() const override { return params_; }
  size_t memory_bytes() const override { return 3 * sizeof(float); }
  void query(std::span<const ProviderQuery> q, std::span<Rgb> out) const override;

 private:
  Rgb value_;
  uint32_t params_;
};

// Opens a .nivm or .nivp file by its magic.
std::unique_ptr<IrradianceProvider> load_provider(const std::filesystem::path& path, const Scene* scene);

}  // namespace niv
