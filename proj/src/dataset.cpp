#include "niv/dataset.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>

#include "niv/error.hpp"
#include "niv/parallel.hpp"
#include "niv/sampling.hpp"

namespace niv {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'I', 'V', 'D'};
constexpr uint32_t kVersion = 1;

float quantize_backface(double f) {
  // floor keeps a retained fraction <= 0.5 at or below 0.5
  const auto q = static_cast<uint32_t>(std::clamp(f, 0.0, 1.0) * 65535.0);
  return static_cast<float>(q / 65535.0);
}

std::array<float, 3> to_f3(const Vec3& v) {
  return {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
}

// First-hit backface fraction over uniform sphere directions. Used to cull
// incident-radiance samples, whose single query direction says little about
// whether the point is inside geometry.
double inside_probe(const Scene& scene, const Vec3& x, Rng& rng) {
  constexpr int kRays = 16;
  int back = 0;
  for (int i = 0; i < kRays; ++i) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const auto hit = scene.intersect(GeometrySet::static_only, {x, uniform_sample_sphere(u1, u2)});
    back += hit && hit->is_backface;
  }
  return double(back) / kRays;
}

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated sample file (" + what + ")");
  return v;
}

}  // namespace

size_t SampleSet::surface_count() const {
  size_t n = 0;
  for (const auto& s : samples) n += s.on_surface;
  return n;
}

Vec3 SampleSet::world_position(size_t i) const {
  const auto& p = samples[i].position;
  return from_unit_cube(bbox, {p[0], p[1], p[2]});
}

std::array<double, kMaxExtraParams> ParamSampler::draw(Rng& rng) const {
  std::array<double, kMaxExtraParams> v{};
  for (uint32_t i = 0; i < count; ++i) {
    const double u = anchors.empty() ? rng.uniform()
                                     : anchors[rng.below(static_cast<uint32_t>(anchors.size()))];
    v[i] = static_cast<float>(u);  // what gets stored is what gets traced
  }
  return v;
}

Bounds3 f32_bounds(const Bounds3& b) {
  Bounds3 out;
  for (int a = 0; a < 3; ++a) {
    out.lo[a] = static_cast<float>(b.lo[a]);
    out.hi[a] = static_cast<float>(b.hi[a]);
  }
  return out;
}

Vec3 to_unit_cube(const Bounds3& bbox, const Vec3& p) {
  const Vec3 e = bbox.extent();
  return {(p.x - bbox.lo.x) / e.x, (p.y - bbox.lo.y) / e.y, (p.z - bbox.lo.z) / e.z};
}

Vec3 from_unit_cube(const Bounds3& bbox, const Vec3& u) {
  const Vec3 e = bbox.extent();
  return {bbox.lo.x + u.x * e.x, bbox.lo.y + u.y * e.y, bbox.lo.z + u.z * e.z};
}

SampleSet bake_dataset(const Scene& scene, const BakeConfig& cfg, const ProgressFn& progress) {
  cfg.tracer.validate();
  if (cfg.n_samples < 1) throw InputError("bake: need at least one sample");
  if (!(cfg.surface_fraction >= 0 && cfg.surface_fraction <= 1))
    throw InputError("bake: surface fraction must be in [0,1]");
  const uint32_t n_params = cfg.params ? cfg.params->count : 0;
  if (n_params != scene.param_count())
    throw InputError("bake: scene has " + std::to_string(scene.param_count()) +
                     " variable parameter(s) but the sampler draws " + std::to_string(n_params));
  if (n_params > kMaxExtraParams) throw InputError("bake: at most 2 extra parameters");

  SampleSet set;
  set.scene_hash = cfg.scene_hash;
  set.spp = cfg.tracer.spp;
  set.seed = cfg.seed;
  set.surface_fraction = static_cast<float>(cfg.surface_fraction);
  set.n_extra_params = n_params;
  set.quantity = cfg.quantity;
  set.bbox = f32_bounds(scene.bbox());
  set.samples.resize(cfg.n_samples);

  const auto n_surface = static_cast<size_t>(std::llround(cfg.n_samples * cfg.surface_fraction));
  const size_t n_volume = cfg.n_samples - n_surface;
  const double eps = scene.ray_epsilon();
  const Bounds3& box = scene.bbox();
  const bool incident = cfg.quantity == TargetQuantity::incident_radiance;
  std::vector<uint8_t> failed(cfg.n_samples, 0);

  auto bake_slot = [&](size_t i) {
    IrradianceSample& out = set.samples[i];
    const bool surface = i >= n_volume;
    const int attempts = cfg.cull ? cfg.max_retries : 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      Rng rng = Rng::keyed(stream_key(cfg.seed, i, static_cast<uint64_t>(attempt)));
      std::array<double, kMaxExtraParams> pv{};
      if (n_params) pv = cfg.params->draw(rng);
      const Scene configured = n_params ? scene.configured(std::span(pv.data(), n_params)) : scene;

      Vec3 pos, dir;
      if (surface) {
        const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
        const SurfaceSample s = configured.sample_surface(u1, u2, u3);
        pos = s.position + s.normal * eps;
        dir = s.normal;
        if (incident) {
          const double v1 = rng.uniform(), v2 = rng.uniform();
          dir = cosine_sample_hemisphere(s.normal, v1, v2);
        }
      } else {
        pos = {box.lo.x + rng.uniform() * box.extent().x, box.lo.y + rng.uniform() * box.extent().y,
               box.lo.z + rng.uniform() * box.extent().z};
        const double u1 = rng.uniform(), u2 = rng.uniform();
        dir = uniform_sample_sphere(u1, u2);
      }

      IndirectEstimate est;
      if (incident) {
        const double bf = inside_probe(configured, pos, rng);
        if (cfg.cull && bf > 0.5) continue;
        est = incident_radiance(configured, pos, dir, cfg.tracer, rng);
        est.backface_fraction = bf;
      } else {
        est = indirect_irradiance(configured, pos, dir, cfg.tracer, rng);
        if (cfg.cull && est.backface_fraction > 0.5) continue;
      }

      out.position = to_f3(to_unit_cube(set.bbox, pos));
      out.direction = to_f3(dir);
      for (uint32_t k = 0; k < n_params; ++k) out.params[k] = static_cast<float>(pv[k]);
      out.target = to_f3({est.value.r, est.value.g, est.value.b});
      out.on_surface = surface;
      out.backface_fraction = quantize_backface(est.backface_fraction);
      return;
    }
    failed[i] = 1;
  };

  constexpr size_t kBlock = 4096;
  for (size_t start = 0; start < cfg.n_samples; start += kBlock) {
    const size_t count = std::min(kBlock, cfg.n_samples - start);
    parallel_for(count, [&](size_t k) { bake_slot(start + k); }, 8);
    if (progress) progress(start + count, cfg.n_samples);
  }

  const size_t n_failed = std::count(failed.begin(), failed.end(), uint8_t{1});
  if (n_failed)
    throw InputError("bake: culling retry budget exhausted (scene mostly solid?); achieved " +
                     std::to_string(cfg.n_samples - n_failed) + " of " +
                     std::to_string(cfg.n_samples) + " samples");
  return set;
}

void save_samples(const SampleSet& set, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, 4);
  put(os, kVersion);
  os.write(reinterpret_cast<const char*>(set.scene_hash.data()), 32);
  put<uint64_t>(os, set.samples.size());
  put<uint64_t>(os, set.surface_count());
  put<uint32_t>(os, set.spp);
  put<uint64_t>(os, set.seed);
  put<float>(os, set.surface_fraction);
  put<uint32_t>(os, set.n_extra_params);
  put<uint32_t>(os, static_cast<uint32_t>(set.quantity));
  for (const Vec3* v : {&set.bbox.lo, &set.bbox.hi})
    for (int a = 0; a < 3; ++a) put<float>(os, static_cast<float>((*v)[a]));
  for (const auto& s : set.samples) {
    for (float f : s.position) put(os, f);
    for (float f : s.direction) put(os, f);
    for (uint32_t k = 0; k < set.n_extra_params; ++k) put(os, s.params[k]);
    for (float f : s.target) put(os, f);
    const auto bf = static_cast<uint32_t>(std::lround(double(s.backface_fraction) * 65535.0));
    put<uint32_t>(os, (bf << 16) | (s.on_surface ? 1u : 0u));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

SampleSet load_samples(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open sample file: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(path.string() + ": not a NIV sample file");
  if (get<uint32_t>(is, "version") != kVersion)
    throw IoError(path.string() + ": unsupported sample file version");
  SampleSet set;
  if (!is.read(reinterpret_cast<char*>(set.scene_hash.data()), 32)) throw IoError("truncated sample file");
  const auto n = get<uint64_t>(is, "count");
  const auto n_surface = get<uint64_t>(is, "surface count");
  set.spp = get<uint32_t>(is, "spp");
  set.seed = get<uint64_t>(is, "seed");
  set.surface_fraction = get<float>(is, "surface fraction");
  set.n_extra_params = get<uint32_t>(is, "params");
  if (set.n_extra_params > kMaxExtraParams) throw IoError(path.string() + ": too many extra params");
  const auto q = get<uint32_t>(is, "quantity");
  if (q > 1) throw IoError(path.string() + ": unknown target quantity");
  set.quantity = static_cast<TargetQuantity>(q);
  for (Vec3* v : {&set.bbox.lo, &set.bbox.hi})
    for (int a = 0; a < 3; ++a) (*v)[a] = get<float>(is, "bbox");
  const size_t record = 4 * (3 + 3 + set.n_extra_params + 3 + 1);
  if (n > (uint64_t{1} << 34) / record) throw IoError(path.string() + ": implausible sample count");
  set.samples.resize(n);
  for (auto& s : set.samples) {
    for (float& f : s.position) f = get<float>(is, "record");
    for (float& f : s.direction) f = get<float>(is, "record");
    for (uint32_t k = 0; k < set.n_extra_params; ++k) s.params[k] = get<float>(is, "record");
    for (float& f : s.target) f = get<float>(is, "record");
    const auto flags = get<uint32_t>(is, "record");
    s.on_surface = flags & 1u;
    s.backface_fraction = static_cast<float>((flags >> 16) / 65535.0);
  }
  if (set.surface_count() != n_surface) throw IoError(path.string() + ": surface count mismatch");
  return set;
}

}  // namespace niv
