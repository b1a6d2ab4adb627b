// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--only N[,M...]] [--quick]
//
// --quick shrinks every workload for a smoke run (verdicts are then not
// meaningful). The exit code is non-zero when a selected criterion fails.

#include <malloc.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "niv/eval.hpp"
#include "niv/fixtures.hpp"
#include "niv/probes.hpp"
#include "niv/render.hpp"
#include "niv/sampling.hpp"
#include "niv/train.hpp"
#include "support/naive_field.hpp"

using namespace niv;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

bool g_quick = false;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Sizes are chosen for a single desktop core; --quick divides them down.
size_t sz(size_t full, size_t quick) { return g_quick ? quick : full; }

SampleSet bake(const Scene& s, size_t n, uint32_t spp, uint64_t seed, double surface = 0.2, bool cull = true,
               std::optional<ParamSampler> params = {}, TargetQuantity q = TargetQuantity::irradiance) {
  BakeConfig c;
  c.n_samples = n;
  c.tracer.spp = spp;
  c.seed = seed;
  c.surface_fraction = surface;
  c.cull = cull;
  c.params = params;
  c.quantity = q;
  const auto t0 = std::chrono::steady_clock::now();
  SampleSet set = bake_dataset(s, c);
  note(fmt("baked %zu samples at %u spp (seed %llu) in %.1fs", n, spp, (unsigned long long)seed, since(t0)));
  return set;
}

NeuralField fit(const ModelConfig& mc, const SampleSet& set, size_t iterations, size_t batch, uint64_t seed) {
  NeuralField m(mc, set.bbox);
  m.initialize(seed);
  m.dataset_seed = set.seed;
  m.train_seed = seed;
  const TrainResult r = train(m, set, TrainConfig::scaled(iterations, batch, seed));
  note(fmt("trained %zu params, %zu iterations x %zu in %.1fs (final loss %.4g)", m.param_count(), iterations, batch,
           r.seconds, r.trace.empty() ? 0.0 : r.trace.back().loss));
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// ------------------------------------------------------------------ 1

Verdict oracle_analytics() {
  // Unit environment over an open floor: the upper hemisphere is unoccluded.
  const Scene env = fixtures::scene("floor_env");
  Rng rng(1, 0);
  DirectOptions o;
  o.env_rays = 1024;
  const auto t0 = std::chrono::steady_clock::now();
  const Rgb d = direct_irradiance(env, {0, 1, 0}, {0, 1, 0}, rng, o);
  const double dt = since(t0);
  double worst = 0;
  for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(d[c] / kPi - 1));

  SceneDesc dark = fixtures::desc("cornell");
  for (auto& m : dark.materials) m.emission = Rgb();
  dark.emitters.clear();
  const Scene s(dark);
  TracerConfig tc;
  tc.spp = 256;
  bool zero = true;
  Rng r2(2, 0);
  for (int i = 0; i < 64; ++i) {
    const Vec3 x{0.1 + 0.8 * r2.uniform(), 0.1 + 0.8 * r2.uniform(), 0.1 + 0.8 * r2.uniform()};
    const Vec3 n = uniform_sample_sphere(r2.uniform(), r2.uniform());
    const Rgb e = indirect_irradiance(s, x, n, tc, r2).value;
    zero = zero && e.r == 0 && e.g == 0 && e.b == 0;
  }
  return {worst <= 0.01 && dt < 1 && zero,
          fmt("direct under L=1: %.5f (pi %+.3f%%, %.3fs); emitterless indirect exactly 0 at 64 points: %s", d.g,
              100 * (d.g / kPi - 1), dt, zero ? "yes" : "no")};
}

// ------------------------------------------------------------------ 2

Verdict floor_indirect() {
  const Scene s = fixtures::scene("floor_env");
  TracerConfig tc;
  tc.spp = 4096;
  Rng rng(3, 0);
  const auto t0 = std::chrono::steady_clock::now();
  const auto e = indirect_irradiance(s, {0, 1, 0}, {0, -1, 0}, tc, rng);
  const double dt = since(t0);
  double worst = 0;
  for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(e.value[c] / (kPi / 2) - 1));
  return {worst <= 0.02 && dt < 10,
          fmt("E = %.4f vs pi/2 = %.4f (%+.2f%%, %.2fs)", e.value.g, kPi / 2, 100 * (e.value.g / (kPi / 2) - 1), dt)};
}

// ------------------------------------------------------------------ 3

Verdict gradient_fd() {
  using testing::Naive;
  ModelConfig c;
  c.width = 16;
  c.hash.levels = 2;
  c.hash.log2_table = 8;  // both levels hashed, so latents collide
  c.n_params = 1;
  const Bounds3 box{{0, 0, 0}, {1, 1, 1}};
  NeuralField m(c, box);
  m.initialize(31);
  Rng rng(37, 0);
  for (float& v : std::span(m.params()).first(m.hash_param_count())) v = (rng.uniform_f() - 0.5f) * 2;
  std::vector<FieldInput> in(16);
  std::vector<Rgb32> t(16);
  for (size_t i = 0; i < in.size(); ++i) {
    for (auto& p : in[i].pos) p = rng.uniform_f();
    const Vec3 d = uniform_sample_sphere(rng.uniform(), rng.uniform());
    in[i].dir = {float(d.x), float(d.y), float(d.z)};
    in[i].params[0] = rng.uniform_f();
    t[i] = {rng.uniform_f() * 2, rng.uniform_f() * 2, rng.uniform_f() * 2};
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<float> grad;
  m.loss_gradient(in, t, grad, LossNormalization::per_channel);
  Naive ref = testing::naive_of(m);
  const auto loss = testing::make_loss(ref, in, t, LossNormalization::per_channel);

  // 512 probes: latents touched by the batch, then weights and biases of every layer.
  std::vector<size_t> probes;
  std::set<size_t> seen;
  for (const auto& x : in)
    for (int l = 0; l < c.hash.levels; ++l) {
      const auto cr = m.grid().corners(x.pos.data(), l);
      for (int k = 0; k < 8; ++k) {
        const size_t i = (m.grid().level_offset(l) + cr.index[k]) * c.hash.features + k % 4;
        if (probes.size() < 192 && seen.insert(i).second) probes.push_back(i);
      }
    }
  const size_t n_latent = probes.size();
  for (int l = 0; l < NeuralField::kLayers; ++l)
    for (size_t k = 0; k < m.layer_out(l); ++k) probes.push_back(m.bias_offset(l) + k);
  const size_t n_bias = probes.size() - n_latent;
  std::vector<size_t> weights;
  for (int l = 0; l < NeuralField::kLayers; ++l)
    for (size_t k = 0; k < m.layer_in(l) * m.layer_out(l); ++k) weights.push_back(m.weight_offset(l) + k);
  while (probes.size() < 512) {
    const size_t i = weights[rng.below(uint32_t(weights.size()))];
    if (seen.insert(i).second) probes.push_back(i);
  }
  float gmax = 0;
  for (float g : grad) gmax = std::max(gmax, std::abs(g));
  // f64 oracle, so a small step is safe and rarely straddles a ReLU kink
  const double h = 1e-5;
  int good = 0;
  for (size_t i : probes) {
    const double orig = ref.p[i];
    ref.p[i] = orig + h;
    const double up = loss(ref);
    ref.p[i] = orig - h;
    const double down = loss(ref);
    ref.p[i] = orig;
    const double fd = (up - down) / (2 * h);
    const double err = std::abs(fd - grad[i]) / std::max({std::abs(fd), double(std::abs(grad[i])), 1e-4 * gmax});
    good += err < 1e-3;
    if (err >= 1e-3 && std::getenv("NIV_DEBUG")) note(fmt("%s #%zu fd %.6g analytic %.6g", m.block_name(i).c_str(), i, fd, grad[i]));
  }
  const double frac = double(good) / double(probes.size());
  const double dt = since(t0);
  return {frac >= 0.99 && dt < 30,
          fmt("%d/%zu probes within 1e-3 (%.1f%%; %zu latents, %zu biases, %zu weights; %.1fs)", good, probes.size(),
              100 * frac, n_latent, n_bias, probes.size() - n_latent - n_bias, dt)};
}

// ------------------------------------------------------------------ 4

Verdict cornell_convergence() {
  const Scene s = fixtures::scene("cornell");
  // Many cheap samples rather than few clean ones: a fixed 64-spp set of the
  // default size is memorized long before 10k iterations.
  const SampleSet tr = bake(s, sz(1 << 21, 1 << 14), 8, 1);
  const SampleSet ev = bake(s, sz(1 << 14, 1 << 11), uint32_t(sz(1024, 64)), 1000);
  ModelConfig mc;
  mc.width = 64;
  mc.hash.levels = 2;
  mc.hash.log2_table = 14;
  const auto t0 = std::chrono::steady_clock::now();
  NivProvider niv(fit(mc, tr, sz(10000, 200), sz(1 << 14, 1 << 12), 3));
  const double wall = since(t0);
  const VolumetricMse m = volumetric_mse(niv, ev, std::vector<uint64_t>{tr.seed, 3});

  // Constant predictor: the training-set mean, scored the same way.
  Rgb mean;
  for (const auto& x : tr.samples)
    for (int c = 0; c < 3; ++c) mean[c] += x.target[c];
  for (int c = 0; c < 3; ++c) mean[c] /= double(tr.samples.size());
  ConstantProvider cst(mean);
  const VolumetricMse b = volumetric_mse(cst, ev, std::vector<uint64_t>{tr.seed});
  const double ratio = m.volume / b.volume;
  return {ratio < 0.1 && wall < 1800,
          fmt("volume MSE %.5f vs constant-mean %.5f: ratio %.3f (< 0.1); surface %.5f; training %.0fs", m.volume,
              b.volume, ratio, m.surface, wall)};
}

// ------------------------------------------------------------------ 5

Verdict memory_tradeoff() {
  const Scene s = fixtures::scene("cornell");
  const SampleSet tr = bake(s, sz(1 << 20, 1 << 14), 8, 1);
  const SampleSet ev = bake(s, sz(1 << 14, 1 << 11), uint32_t(sz(1024, 64)), 1000);
  const size_t budget = 50000;
  const ModelConfig mc = model_for_budget(budget, tr.bbox);
  NivProvider niv(fit(mc, tr, sz(4000, 200), sz(1 << 14, 1 << 12), 5));
  const int n = cubic_dims_for_budget(budget);
  ProbeBakeConfig pc;
  pc.directions = uint32_t(sz(1024, 64));
  pc.seed = 5;
  ProbeGrid grid = bake_grid(s, {n, n, n}, pc);
  grid.quantize_f16();
  const ProbeProvider probes(grid, &s);
  grid.heuristics.rt_visibility = true;
  grid.heuristics.cosine_falloff = false;
  const ProbeProvider probes_rt(grid, &s);
  const std::vector<uint64_t> used{tr.seed, 5};
  const double e_niv = volumetric_mse(niv, ev, used).volume;
  const double e_p = volumetric_mse(probes, ev, used).volume;
  const double e_rt = volumetric_mse(probes_rt, ev, used).volume;
  const double ratio = e_p / e_niv;
  return {e_niv <= 0.5 * e_p,
          fmt("at %.3f MB: NIV %zu B MSE %.5f, probes %dx%dx%d %zu B MSE %.5f: NIV %.1fx better (need >= 2x, target 10x); "
              "probes+RT %.5f (%.1fx)",
              budget / 1e6, niv.memory_bytes(), e_niv, n, n, n, probes.memory_bytes(), e_p, ratio, e_rt,
              e_rt / e_niv)};
}

// ------------------------------------------------------------------ 6

Verdict leak() {
  const Scene s = fixtures::scene("leak");
  // Dark-side targets are noisy; many positions matter more than spp here.
  const SampleSet tr = bake(s, sz(1 << 21, 1 << 14), 8, 1);
  const SampleSet ev = bake(s, sz(1 << 14, 1 << 11), uint32_t(sz(1024, 64)), 1000);
  const size_t budget = 50000;
  NivProvider niv(fit(model_for_budget(budget, tr.bbox), tr, sz(4000, 200), sz(1 << 14, 1 << 12), 7));
  const int n = cubic_dims_for_budget(budget);
  ProbeBakeConfig pc;
  pc.directions = uint32_t(sz(1024, 64));
  pc.seed = 7;
  ProbeGrid grid = bake_grid(s, {n, n, n}, pc);
  grid.quantize_f16();
  const ProbeProvider probes(grid, &s);
  grid.heuristics.rt_visibility = true;
  grid.heuristics.cosine_falloff = false;
  const ProbeProvider probes_rt(grid, &s);

  // The unlit room lies beyond the divider, x > 1.14.
  std::vector<size_t> dark;
  for (size_t i = 0; i < ev.samples.size(); ++i)
    if (ev.world_position(i).x > 1.14) dark.push_back(i);
  const std::vector<uint64_t> used{tr.seed, 7};
  auto side = [&](const IrradianceProvider& p, double* mean_signed) {
    std::vector<double> err;
    volumetric_mse(p, ev, used, &err);
    double s_signed = 0, s_abs = 0;
    for (size_t i : dark) {
      s_signed += err[i];
      s_abs += std::abs(err[i]);
    }
    *mean_signed = s_signed / double(dark.size());
    return s_abs / double(dark.size());
  };
  double sg_p, sg_rt, sg_n;
  const double a_p = side(probes, &sg_p), a_rt = side(probes_rt, &sg_rt), a_n = side(niv, &sg_n);
  return {sg_p > 0 && a_rt < a_p && a_n <= a_rt,
          fmt("dark room (%zu samples) mean signed / abs error: probes %+.4f / %.4f, probes+RT %+.4f / %.4f, NIV "
              "%+.4f / %.4f",
              dark.size(), sg_p, a_p, sg_rt, a_rt, sg_n, a_n)};
}

// ------------------------------------------------------------------ 7

Verdict shading_identity() {
  const Scene s = fixtures::scene("cornell");
  const Camera cam = *s.camera();
  const int w = int(sz(48, 16)), h = w;
  TracerConfig tc;
  tc.spp = uint32_t(sz(1024, 64));
  const OracleProvider oracle(s, tc, 11);
  ShadeOptions o;
  o.provider = &oracle;
  o.env_rays = 64;
  o.light_samples = 64;
  o.seed = 11;
  const auto t0 = std::chrono::steady_clock::now();
  const FrameHDR img = shade_deferred(rasterize_gbuffer(s, cam, w, h), s, o);
  ReferenceOptions ro;
  ro.tracer.spp = uint32_t(sz(4096, 256));
  ro.seed = 12;
  const FrameHDR ref = reference_render(s, cam, w, h, ro);
  const ImageMetrics im = image_metrics(img, ref);
  return {im.rel_mse < 0.02, fmt("%dx%d, oracle %u spp vs reference %u spp: relMSE %.5f (< 0.02), MSE %.3g; %.0fs", w,
                                 h, tc.spp, ro.tracer.spp, im.rel_mse, im.mse, since(t0))};
}

// ------------------------------------------------------------------ 8

Verdict hash_ablation() {
  const Scene s = fixtures::scene("cornell");
  // Large tables memorize a fixed noisy set, so spend the paths on positions.
  const SampleSet tr = bake(s, sz(1 << 23, 1 << 16), 1, 1);
  const SampleSet ev = bake(s, sz(1 << 14, 1 << 11), uint32_t(sz(512, 64)), 1000);
  HashSweepConfig cfg;
  cfg.model.hash.levels = 8;
  cfg.model.width = 64;
  cfg.train = TrainConfig::scaled(sz(1500, 100), sz(1 << 13, 1 << 11), 0);
  cfg.seeds = {1, 2, 3};
  const std::vector<int> ts{10, 12, 14, 17};
  const auto rows =
      sweep_hash_table(tr, ev, ts, cfg, [](const std::string& m) { note("sweep " + m); });
  const auto med = median_by_budget(rows, "niv");
  std::map<int, size_t> mem;
  for (const auto& r : rows) mem[int(r.budget_bytes)] = r.actual_bytes;
  bool monotone = true;
  std::string curve;
  for (size_t i = 0; i < med.size(); ++i) {
    curve += fmt("%sT=2^%zu %.5f (%zu B)", i ? ", " : "", med[i].first, med[i].second, mem[int(med[i].first)]);
    if (i && med[i].second > 1.1 * med[i - 1].second) monotone = false;
  }
  const double r14 = med[2].second / med[3].second;
  const double shrink = double(mem[17]) / double(mem[14]);
  const bool plateau = r14 <= 1.5, small = shrink >= 8;
  return {monotone && plateau && small,
          fmt("median MSE %s; non-increasing within 10%%: %s; MSE(2^14)/MSE(2^17) = %.3f (<= 1.5: %s); memory "
              "2^17/2^14 = %.2fx (>= 8x: %s)",
              curve.c_str(), monotone ? "yes" : "no", r14, plateau ? "yes" : "no", shrink, small ? "yes" : "no")};
}

// ------------------------------------------------------------------ 9

Verdict culling_ablation() {
  const Scene s = fixtures::scene("cornell");
  const SampleSet ev = bake(s, sz(1 << 14, 1 << 11), uint32_t(sz(512, 64)), 1000);
  struct Cfg {
    const char* name;
    bool cull;
    double surface;
  };
  const Cfg cfgs[] = {{"cull+surface", true, 0.2}, {"cull only", true, 0.0}, {"surface only", false, 0.2},
                      {"neither", false, 0.0}};
  std::vector<double> vol, surf;
  std::string detail;
  for (const Cfg& c : cfgs) {
    const SampleSet tr = bake(s, sz(1 << 20, 1 << 14), 8, 1, c.surface, c.cull);
    std::vector<double> v, su;
    for (uint64_t seed : {1, 2, 3}) {
      NivProvider niv(fit(ModelConfig{}, tr, sz(2000, 100), sz(1 << 13, 1 << 11), seed));
      const auto m = volumetric_mse(niv, ev, std::vector<uint64_t>{tr.seed, seed});
      v.push_back(m.volume);
      su.push_back(m.surface);
    }
    vol.push_back(median(v));
    surf.push_back(median(su));
    detail += fmt("%s%s: volume %.5f surface %.5f", detail.empty() ? "" : "; ", c.name, vol.back(), surf.back());
  }
  const double best = *std::min_element(vol.begin(), vol.end());
  const bool surf_ok = surf[0] <= surf[1] && surf[0] <= surf[2];
  const bool vol_ok = vol[0] <= 1.25 * best;
  return {surf_ok && vol_ok, "medians of 3 seeds: " + detail +
                                 fmt("; surface <= single strategies: %s; volume / best = %.3f (<= 1.25)",
                                     surf_ok ? "yes" : "no", vol[0] / best)};
}

// ------------------------------------------------------------------ 10

Verdict sh_correctness() {
  // Orthonormality by Monte Carlo over uniform directions.
  Rng rng(41, 0);
  const int n = 200000;
  std::array<std::array<double, 9>, 9> g{};
  for (int i = 0; i < n; ++i) {
    const auto y = sh_basis(uniform_sample_sphere(rng.uniform(), rng.uniform()));
    for (int a = 0; a < 9; ++a)
      for (int b = 0; b < 9; ++b) g[a][b] += y[a] * y[b];
  }
  double worst = 0;
  for (int a = 0; a < 9; ++a)
    for (int b = 0; b < 9; ++b) worst = std::max(worst, std::abs(4 * kPi * g[a][b] / n - (a == b ? 1 : 0)));

  // A grid baked from constant radiance c gives E = pi c for every normal.
  const Rgb c{0.8, 0.5, 0.25};
  const RadianceFn constant = [&](const Vec3&, const Vec3&, Rng&, bool* bf) {
    if (bf) *bf = false;
    return c;
  };
  ProbeGrid grid({2, 2, 2}, Bounds3{{0, 0, 0}, {1, 1, 1}});
  for (size_t p = 0; p < grid.probe_count(); ++p) {
    Rng r(43, p);
    grid.probe(p) = project_probe(constant, {0.5, 0.5, 0.5}, 4096, r).sh;
  }
  grid.quantize_f16();
  double worst_e = 0;
  for (int i = 0; i < 256; ++i) {
    const Vec3 x{rng.uniform(), rng.uniform(), rng.uniform()};
    const Rgb e = grid.query(x, uniform_sample_sphere(rng.uniform(), rng.uniform()));
    for (int k = 0; k < 3; ++k) worst_e = std::max(worst_e, std::abs(e[k] / (kPi * c[k]) - 1));
  }
  const double tol = 0.01 + 2e-3;  // plus f16 rounding of nine coefficients
  return {worst <= 0.01 && worst_e <= tol,
          fmt("max |<Yi,Yj> - delta| = %.4f (<= 0.01); constant grid max |E/(pi c) - 1| = %.4f (<= %.3f)", worst,
              worst_e, tol)};
}

// ------------------------------------------------------------------ 11

Verdict incident_ablation() {
  const Scene s = fixtures::scene("cornell");
  const Camera cam = *s.camera();
  const int w = int(sz(48, 16)), h = w;
  const size_t n = sz(1 << 20, 1 << 14), iters = sz(3000, 100), batch = sz(1 << 13, 1 << 11);
  const SampleSet tr_e = bake(s, n, 8, 1);
  const SampleSet tr_l = bake(s, n, 8, 1, 0.2, true, {}, TargetQuantity::incident_radiance);
  ModelConfig mc;  // same capacity for both
  mc.width = 64;
  mc.hash.levels = 2;
  ModelConfig ml = mc;
  ml.quantity = TargetQuantity::incident_radiance;
  NivProvider niv(fit(mc, tr_e, iters, batch, 2));
  const NeuralField inc = fit(ml, tr_l, iters, batch, 2);

  const GBuffer gb = rasterize_gbuffer(s, cam, w, h);
  TracerConfig tc;
  tc.spp = uint32_t(sz(1024, 64));
  const OracleProvider oracle(s, tc, 13);
  ShadeOptions o;
  o.env_rays = 16;
  o.light_samples = 16;
  o.seed = 3;
  o.provider = &oracle;
  const FrameHDR ref = shade_deferred(gb, s, o);
  o.provider = &niv;
  const double mse_niv = image_metrics(shade_deferred(gb, s, o), ref).mse;
  const double mse_s1 = image_metrics(shade_sampled_incident(gb, s, inc, 1, o), ref).mse;

  // Per-pixel variance of the sampled irradiance over independent seeds.
  const int runs = 8;
  std::vector<double> var;
  for (int spp : {4, 16, 64}) {
    std::vector<FrameHDR> frames;
    for (int k = 0; k < runs; ++k) {
      ShadeOptions ok = o;
      ok.seed = 100 + k;
      ShadeAovs aov;
      shade_sampled_incident(gb, s, inc, spp, ok, &aov);
      frames.push_back(std::move(aov.irradiance));
    }
    double v = 0;
    size_t cnt = 0;
    for (size_t p = 0; p < gb.size(); ++p) {
      if (!gb.coverage[p]) continue;
      for (int c = 0; c < 3; ++c) {
        double m = 0, q = 0;
        for (const auto& f : frames) m += f.pixels[p][c];
        m /= runs;
        for (const auto& f : frames) q += (f.pixels[p][c] - m) * (f.pixels[p][c] - m);
        v += q / (runs - 1);
      }
      ++cnt;
    }
    var.push_back(v / (3.0 * double(cnt)));
  }
  const double r1 = var[0] / var[1], r2 = var[1] / var[2];
  const bool scaling = std::abs(r1 / 4 - 1) <= 0.2 && std::abs(r2 / 4 - 1) <= 0.2;
  return {mse_s1 > mse_niv && scaling,
          fmt("image MSE: sampled S=1 %.4g vs pre-integrated %.4g; variance S=4/16/64: %.3g %.3g %.3g, ratios %.2f "
              "%.2f (4 +- 20%%)",
              mse_s1, mse_niv, var[0], var[1], var[2], r1, r2)};
}

// ------------------------------------------------------------------ 12

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / fmt("niv_accept_%d", int(::getpid()));
  fs::create_directories(dir);
  const std::string niv = NIV_CLI_PATH;
  const std::string cd = "cd '" + dir.string() + "' && '" + niv + "' ";
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"cornell.json", "fixture cornell -o cornell.json"},
      {"d.nivd", "bake cornell.json -o d.nivd --n 4096 --spp 8 --seed 1"},
      {"e.nivd", "bake cornell.json -o e.nivd --n 1024 --spp 32 --seed 2"},
      {"m.nivm", "train d.nivd -o m.nivm --width 32 --iterations 200 --batch 1024 --seed 3"},
      {"p.nivp", "bake-probes cornell.json -o p.nivp --dims 4 4 4 --directions 128 --seed 4"},
      {"r.pfm", "render cornell.json -o r.pfm --provider m.nivm --width 32 --height 32 --half-res --ao "
                "--dynamic 'sphere:0.12@(t=(0.5,0.12,0.7))'"},
      {"q.pfm", "render cornell.json -o q.pfm --provider p.nivp --width 32 --height 32"},
      {"rep.json", "eval --provider m.nivm --evalset e.nivd -o rep.json"},
      {"sweep.csv", "sweep memory cornell.json -o sweep.csv --budgets 0.01,0.03 --train-n 2048 --train-spp 4 "
                    "--eval-n 512 --iterations 50 --batch 512 --directions 32 --seeds 1,2"},
  };
  std::vector<std::string> bad;
  int checked = 0;
  for (const auto& [out, args] : cmds) {
    if (shell(cd + args) != 0) {
      bad.push_back(out + " (command failed)");
      continue;
    }
    if (out == "cornell.json") continue;
    std::vector<fs::path> files{dir / out};
    if (out == "m.nivm") files.push_back(dir / "m.loss.csv");
    if (out == "r.pfm" || out == "q.pfm") files.push_back(dir / fs::path(out).replace_extension(".png"));
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(slurp(f));
    if (shell(cd + "--threads 1 --manifest " + out + ".manifest.json") != 0) {
      bad.push_back(out + " (replay failed)");
      continue;
    }
    for (size_t k = 0; k < files.size(); ++k) {
      ++checked;
      if (first[k].empty() || slurp(files[k]) != first[k]) bad.push_back(files[k].filename().string());
    }
  }
  fs::remove_all(dir);
  std::string list;
  for (const auto& b : bad) list += " " + b;
  return {bad.empty(), fmt("%d outputs replayed from manifests (datasets, model, loss CSV, grid, PFM/PNG, report, sweep "
                           "CSV): %s",
                           checked, bad.empty() ? "all byte-identical" : ("differ:" + list).c_str())};
}

// ------------------------------------------------------------------ 13

Verdict time_of_day() {
  const Scene s = fixtures::scene("sun_room");
  std::vector<double> anchors, held;
  for (int k = 0; k < 8; ++k) {
    anchors.push_back(k / 7.0);
    held.push_back((k + 0.5) / 8.0);
  }
  const SampleSet tr = bake(s, sz(1 << 20, 1 << 14), 4, 1, 0.2, true, ParamSampler{1, anchors});
  ModelConfig mc;
  mc.n_params = 1;
  mc.freq_bands = 4;
  const NivProvider niv(fit(mc, tr, sz(4000, 200), sz(1 << 14, 1 << 12), 9));
  auto mse_at = [&](double v, uint64_t seed) {
    const SampleSet ev = bake(s, sz(4096, 512), uint32_t(sz(256, 32)), seed, 0.2, true, ParamSampler{1, {v}});
    return volumetric_mse(niv, ev, std::vector<uint64_t>{tr.seed, 9}).volume;
  };
  double a = 0, b = 0;
  std::string la, lb;
  for (int k = 0; k < 8; ++k) {
    const double ea = mse_at(anchors[k], 2000 + k), eb = mse_at(held[k], 3000 + k);
    a += ea / 8;
    b += eb / 8;
    la += fmt(" %.4f", ea);
    lb += fmt(" %.4f", eb);
  }
  return {b <= 1.5 * a, fmt("mean volume MSE at 8 held-out values %.5f vs 8 anchors %.5f: ratio %.3f (<= 1.5); "
                            "anchors [%s ], held-out [%s ]",
                            b, a, b / a, la.c_str(), lb.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") {
      g_quick = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--only N[,M...]] [--quick]\n", argv[0]);
      return 2;
    }
  }
  const std::vector<Criterion> all = {
      {1, "oracle analytics", oracle_analytics},
      {2, "floor indirect", floor_indirect},
      {3, "gradient vs finite differences", gradient_fd},
      {4, "training convergence", cornell_convergence},
      {5, "memory-error trade-off", memory_tradeoff},
      {6, "leak fixture", leak},
      {7, "shading identity", shading_identity},
      {8, "hash table ablation", hash_ablation},
      {9, "surface/culling ablation", culling_ablation},
      {10, "SH correctness", sh_correctness},
      {11, "incident-radiance ablation", incident_ablation},
      {12, "determinism", determinism},
      {13, "time-of-day model", time_of_day},
  };
  int failed = 0;
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::fprintf(stderr, "criterion %d: %s ...\n", c.id, c.name);
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2d: %s  %s: %s [%.0fs]\n", c.id, v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(),
                since(t0));
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
