#include "niv/provider.hpp"

#include <fstream>

#include "niv/error.hpp"
#include "niv/parallel.hpp"

namespace niv {

void IrradianceProvider::check_params(size_t n) const {
  if (n != param_count())
    throw InputError(kind() + " provider takes " + std::to_string(param_count()) + " extra parameter(s), got " +
                     std::to_string(n));
}

NivProvider::NivProvider(NeuralField model, Precision storage) : model_(std::move(model)), storage_(storage) {
  if (model_.config().quantity != TargetQuantity::irradiance)
    throw InputError("model predicts incident radiance, not irradiance; use sampled shading");
  if (storage_ == Precision::f16) model_.quantize_f16();  // evaluate what the file would hold
}

void NivProvider::query(std::span<const ProviderQuery> q, std::span<Rgb> out) const {
  const uint32_t np = param_count();
  std::vector<FieldInput> in(q.size());
  for (size_t i = 0; i < q.size(); ++i)
    in[i] = model_.make_input(q[i].position, q[i].normal, std::span(q[i].params.data(), np));
  std::vector<Rgb32> y(q.size());
  model_.infer(in, y);
  for (size_t i = 0; i < q.size(); ++i) out[i] = {y[i][0], y[i][1], y[i][2]};
}

ProbeProvider::ProbeProvider(ProbeGrid grid, const Scene* scene) : grid_(std::move(grid)), scene_(scene) {
  if (grid_.heuristics.rt_visibility && !scene_)
    throw InputError("probe grid with ray-traced visibility needs the scene");
}

void ProbeProvider::query(std::span<const ProviderQuery> q, std::span<Rgb> out) const {
  parallel_for(q.size(), [&](size_t i) { out[i] = grid_.query(q[i].position, q[i].normal, scene_); }, 256);
}

OracleProvider::OracleProvider(const Scene& scene, TracerConfig cfg, uint64_t seed)
    : scene_(scene), cfg_(cfg), seed_(seed) {
  cfg_.validate();
}

void OracleProvider::query(std::span<const ProviderQuery> q, std::span<Rgb> out) const {
  const size_t np = scene_.param_count();
  parallel_for(q.size(), [&](size_t i) {
    Rng rng = Rng::keyed(stream_key(seed_, i, 0x6f7261));
    if (np) {
      const Scene s = scene_.configured(std::span(q[i].params.data(), np));
      out[i] = indirect_irradiance(s, q[i].position, q[i].normal, cfg_, rng).value;
    } else {
      out[i] = indirect_irradiance(scene_, q[i].position, q[i].normal, cfg_, rng).value;
    }
  });
}

void ConstantProvider::query(std::span<const ProviderQuery> q, std::span<Rgb> out) const {
  for (size_t i = 0; i < q.size(); ++i) out[i] = value_;
}

std::unique_ptr<IrradianceProvider> load_provider(const std::filesystem::path& path, const Scene* scene) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open provider file: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  const std::string m(magic, 4);
  if (m == "NIVM") {
    Precision p;
    NeuralField model = load_model(path, &p);
    return std::make_unique<NivProvider>(std::move(model), p);
  }
  if (m == "NIVP") return std::make_unique<ProbeProvider>(load_grid(path), scene);
  throw IoError(path.string() + ": not a NIV model or probe grid file");
}

}  // namespace niv
