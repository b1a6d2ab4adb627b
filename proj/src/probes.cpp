#include "niv/probes.hpp"

#include <Eigen/Core>
#include <cstring>
#include <fstream>

#include "niv/error.hpp"
#include "niv/parallel.hpp"
#include "niv/sampling.hpp"

namespace niv {

std::array<double, 9> sh_basis(const Vec3& n) {
  const double x = n.x, y = n.y, z = n.z;
  return {0.282095,
          0.488603 * y,
          0.488603 * z,
          0.488603 * x,
          1.092548 * x * y,
          1.092548 * y * z,
          0.315392 * (3 * z * z - 1),
          1.092548 * x * z,
          0.546274 * (x * x - y * y)};
}

Rgb ShIrradiance::eval(const Vec3& n) const {
  const auto y = sh_basis(n);
  Rgb e;
  for (int k = 0; k < 9; ++k)
    for (int ch = 0; ch < 3; ++ch) e[ch] += y[k] * c[k][ch];
  return e;
}

namespace {

// Stratified on a sqrt(D) x sqrt(D) grid; leftovers are plain uniform draws.
Vec3 sphere_direction(uint32_t s, uint32_t total, Rng& rng) {
  const auto m = static_cast<uint32_t>(std::sqrt(double(total)));
  const double j1 = rng.uniform(), j2 = rng.uniform();
  if (s < m * m) return uniform_sample_sphere((s / m + j1) / m, (s % m + j2) / m);
  return uniform_sample_sphere(j1, j2);
}

ShIrradiance to_sh(const std::array<Rgb, 9>& acc) {
  ShIrradiance sh;
  for (int k = 0; k < 9; ++k)
    for (int ch = 0; ch < 3; ++ch) sh.c[k][ch] = static_cast<float>(acc[k][ch]);
  return sh;
}

}  // namespace

ProbeBake project_probe(const RadianceFn& radiance, const Vec3& x, uint32_t directions, Rng& rng) {
  if (directions == 0) throw InputError("probe bake: need at least one direction");
  std::array<Rgb, 9> acc{};
  int back = 0;
  for (uint32_t s = 0; s < directions; ++s) {
    const Vec3 w = sphere_direction(s, directions, rng);
    bool b = false;
    const Rgb L = radiance(x, w, rng, &b);
    back += b;
    const auto y = sh_basis(w);
    for (int k = 0; k < 9; ++k) acc[k] += L * y[k];
  }
  const double scale = 4 * kPi / directions;
  for (int k = 0; k < 9; ++k) acc[k] *= scale * kShCosineBand[sh_band(k)];
  return {to_sh(acc), double(back) / directions};
}

ProbeBake bake_probe(const Scene& scene, const Vec3& x, const ProbeBakeConfig& cfg, Rng& rng) {
  if (cfg.project_irradiance) {
    std::array<Rgb, 9> acc{};
    TracerConfig t = cfg.tracer;
    t.spp = cfg.irradiance_spp;
    double back = 0;
    for (uint32_t s = 0; s < cfg.directions; ++s) {
      const Vec3 n = sphere_direction(s, cfg.directions, rng);
      const IndirectEstimate e = indirect_irradiance(scene, x, n, t, rng);
      back += e.backface_fraction;
      const auto y = sh_basis(n);
      for (int k = 0; k < 9; ++k) acc[k] += e.value * y[k];
    }
    for (auto& a : acc) a *= 4 * kPi / cfg.directions;
    return {to_sh(acc), back / cfg.directions};
  }
  const RadianceFn traced = [&](const Vec3& p, const Vec3& w, Rng& r, bool* backface) {
    return reflected_radiance(scene, {p, w}, cfg.tracer, r, GeometrySet::static_only, backface);
  };
  return project_probe(traced, x, cfg.directions, rng);
}

ProbeGrid::ProbeGrid(std::array<int, 3> dims, const Bounds3& bbox) : dims_(dims), bbox_(bbox) {
  for (int d : dims)
    if (d < 2) throw InputError("probe grid: every dimension must be >= 2");
  probes_.resize(size_t(dims[0]) * dims[1] * dims[2]);
}

Vec3 ProbeGrid::position(int i, int j, int k) const {
  const Vec3 e = bbox_.extent();
  return {bbox_.lo.x + e.x * i / (dims_[0] - 1), bbox_.lo.y + e.y * j / (dims_[1] - 1),
          bbox_.lo.z + e.z * k / (dims_[2] - 1)};
}

ProbeGrid::Weights ProbeGrid::weights(const Vec3& x, const Vec3& n, const Scene* scene) const {
  int base[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double u = std::clamp((x[a] - bbox_.lo[a]) / (bbox_.hi[a] - bbox_.lo[a]), 0.0, 1.0) * (dims_[a] - 1);
    base[a] = std::min(static_cast<int>(u), dims_[a] - 2);
    f[a] = u - base[a];
  }
  Weights w;
  double sum = 0;
  for (int c = 0; c < 8; ++c) {
    const int i = base[0] + (c & 1), j = base[1] + ((c >> 1) & 1), k = base[2] + ((c >> 2) & 1);
    double wt = ((c & 1) ? f[0] : 1 - f[0]) * ((c & 2) ? f[1] : 1 - f[1]) * ((c & 4) ? f[2] : 1 - f[2]);
    const Vec3 p = position(i, j, k);
    const Vec3 d = p - x;
    const double dist = length(d);
    if (heuristics.cosine_falloff && dist > 1e-12)
      wt *= std::pow(std::max(0.0, dot(d / dist, n)), heuristics.falloff_exponent);
    if (heuristics.rt_visibility && scene && dist > 1e-12) {
      // leave from the normal side so probes behind the surface are blocked
      const double eps = scene->ray_epsilon();
      const Vec3 o = x + n * eps;
      const Vec3 to = p - o;
      const double len = length(to);
      if (len > eps && scene->occluded(GeometrySet::static_only, {o, to / len}, len - eps)) wt = 0;
    }
    wt = std::max(wt, heuristics.weight_clamp);
    w.probe[c] = index(i, j, k);
    w.weight[c] = wt;
    sum += wt;
  }
  for (double& v : w.weight) v /= sum;
  return w;
}

Rgb ProbeGrid::query(const Vec3& x, const Vec3& n, const Scene* scene) const {
  const Weights w = weights(x, n, scene);
  Rgb e;
  for (int c = 0; c < 8; ++c) e += probes_[w.probe[c]].eval(n) * w.weight[c];
  return e;
}

void ProbeGrid::quantize_f16() {
  for (auto& p : probes_)
    for (auto& k : p.c)
      for (float& v : k) v = static_cast<float>(Eigen::half(v));
}

ProbeGrid bake_grid(const Scene& scene, std::array<int, 3> dims, const ProbeBakeConfig& cfg,
                    const ProgressFn& progress) {
  cfg.tracer.validate();
  ProbeGrid grid(dims, f32_bounds(scene.bbox()));
  std::vector<uint8_t> inside(grid.probe_count(), 0);
  const size_t total = grid.probe_count();
  constexpr size_t kBlock = 256;
  for (size_t start = 0; start < total; start += kBlock) {
    const size_t count = std::min(kBlock, total - start);
    parallel_for(count, [&](size_t t) {
      const size_t idx = start + t;
      const int i = int(idx % dims[0]), j = int((idx / dims[0]) % dims[1]), k = int(idx / (size_t(dims[0]) * dims[1]));
      Rng rng = Rng::keyed(stream_key(cfg.seed, idx, 0x70726f6265));
      const ProbeBake b = bake_probe(scene, grid.position(i, j, k), cfg, rng);
      grid.probe(idx) = b.sh;
      inside[idx] = b.inside();
    });
    if (progress) progress(start + count, total);
  }
  for (size_t i = 0; i < total; ++i)
    if (inside[i]) grid.flagged.push_back(static_cast<uint32_t>(i));
  return grid;
}

int cubic_dims_for_budget(size_t bytes) {
  int n = 2;
  while (size_t(n + 1) * (n + 1) * (n + 1) * ProbeGrid::kBytesPerProbe <= bytes) ++n;
  return n;
}

// ---- file format ----

namespace {

constexpr char kMagic[4] = {'N', 'I', 'V', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated probe grid file");
  return v;
}

}  // namespace

size_t grid_header_bytes() { return 4 + 4 + 3 * 4 + 6 * 4 + 4 + 4 + 4; }

void save_grid(const ProbeGrid& g, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, 4);
  put<uint32_t>(os, kVersion);
  for (int d : g.dims()) put<uint32_t>(os, static_cast<uint32_t>(d));
  for (const Vec3* v : {&g.bbox().lo, &g.bbox().hi})
    for (int a = 0; a < 3; ++a) put<float>(os, static_cast<float>((*v)[a]));
  put<uint32_t>(os, (g.heuristics.cosine_falloff ? 1u : 0u) | (g.heuristics.rt_visibility ? 2u : 0u));
  put<float>(os, static_cast<float>(g.heuristics.falloff_exponent));
  put<float>(os, static_cast<float>(g.heuristics.weight_clamp));
  std::vector<Eigen::half> h;
  h.reserve(g.probe_count() * 27);
  for (size_t i = 0; i < g.probe_count(); ++i)
    for (const auto& k : g.probe(i).c)
      for (float v : k) h.push_back(Eigen::half(v));
  os.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size() * 2));
  if (!os) throw IoError("write failed: " + path.string());
}

ProbeGrid load_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open probe grid file: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not a NIV probe grid file");
  if (get<uint32_t>(is) != kVersion) throw IoError(path.string() + ": unsupported probe grid version");
  std::array<int, 3> dims;
  for (int& d : dims) {
    const auto v = get<uint32_t>(is);
    if (v < 2 || v > 4096) throw IoError(path.string() + ": bad grid dimensions");
    d = static_cast<int>(v);
  }
  Bounds3 bbox;
  for (Vec3* v : {&bbox.lo, &bbox.hi})
    for (int a = 0; a < 3; ++a) (*v)[a] = get<float>(is);
  ProbeGrid g(dims, bbox);
  const auto flags = get<uint32_t>(is);
  g.heuristics.cosine_falloff = flags & 1u;
  g.heuristics.rt_visibility = flags & 2u;
  g.heuristics.falloff_exponent = get<float>(is);
  g.heuristics.weight_clamp = get<float>(is);
  std::vector<Eigen::half> h(g.probe_count() * 27);
  if (!is.read(reinterpret_cast<char*>(h.data()), static_cast<std::streamsize>(h.size() * 2)))
    throw IoError(path.string() + ": truncated probe grid file");
  size_t at = 0;
  for (size_t i = 0; i < g.probe_count(); ++i)
    for (auto& k : g.probe(i).c)
      for (float& v : k) v = static_cast<float>(h[at++]);
  return g;
}

}  // namespace niv
