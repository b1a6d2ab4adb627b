#include "niv/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "niv/error.hpp"
#include "niv/sampling.hpp"

namespace niv {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

VolumetricMse volumetric_mse(const IrradianceProvider& provider, const SampleSet& eval,
                             std::span<const uint64_t> training_seeds) {
  return volumetric_mse(provider, eval, training_seeds, nullptr);
}

VolumetricMse volumetric_mse(const IrradianceProvider& provider, const SampleSet& eval,
                             std::span<const uint64_t> training_seeds, std::vector<double>* signed_error) {
  if (eval.quantity != TargetQuantity::irradiance) throw InputError("eval set must hold irradiance targets");
  if (std::find(training_seeds.begin(), training_seeds.end(), eval.seed) != training_seeds.end())
    throw InputError("eval set seed " + std::to_string(eval.seed) +
                     " equals a training seed; bake the eval set with a held-out seed");
  provider.check_params(eval.n_extra_params);
  if (eval.samples.empty()) throw InputError("eval set is empty");

  const size_t n = eval.samples.size();
  std::vector<ProviderQuery> q(n);
  for (size_t i = 0; i < n; ++i) {
    const IrradianceSample& s = eval.samples[i];
    q[i].position = eval.world_position(i);
    q[i].normal = normalize(Vec3(s.direction[0], s.direction[1], s.direction[2]));
    for (uint32_t k = 0; k < eval.n_extra_params; ++k) q[i].params[k] = s.params[k];
  }
  std::vector<Rgb> out(n);
  provider.query(q, out);

  VolumetricMse r;
  double sum_v = 0, sum_s = 0;
  if (signed_error) signed_error->assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const IrradianceSample& s = eval.samples[i];
    double se = 0, d = 0;
    for (int c = 0; c < 3; ++c) {
      const double e = out[i][c] - double(s.target[c]);
      se += e * e;
      d += e;
    }
    se /= 3;
    if (signed_error) (*signed_error)[i] = d / 3;
    if (s.on_surface) {
      sum_s += se;
      ++r.n_surface;
    } else {
      sum_v += se;
      ++r.n_volume;
    }
  }
  if (!std::isfinite(sum_v) || !std::isfinite(sum_s)) throw NumericalError("non-finite provider output during eval");
  r.volume = r.n_volume ? sum_v / double(r.n_volume) : 0;
  r.surface = r.n_surface ? sum_s / double(r.n_surface) : 0;
  r.all = (sum_v + sum_s) / double(n);
  return r;
}

double constant_mean_mse(const SampleSet& set) {
  if (set.samples.empty()) throw InputError("empty sample set");
  const double n = double(set.samples.size());
  double mse = 0;
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    for (const auto& s : set.samples) mean += s.target[c];
    mean /= n;
    double v = 0;
    for (const auto& s : set.samples) v += (s.target[c] - mean) * (s.target[c] - mean);
    mse += v / n;
  }
  return mse / 3;
}

ImageMetrics image_metrics(const FrameHDR& frame, const FrameHDR& reference, std::span<const uint8_t> mask) {
  if (frame.width != reference.width || frame.height != reference.height)
    throw InputError("image size mismatch: " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                     " vs " + std::to_string(reference.width) + "x" + std::to_string(reference.height));
  if (!mask.empty() && mask.size() != frame.pixels.size()) throw InputError("image mask size mismatch");
  ImageMetrics m;
  for (size_t p = 0; p < frame.pixels.size(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double f = frame.pixels[p][c], d = f - reference.pixels[p][c];
      m.mse += d * d;
      m.rel_mse += d * d / (f * f + 0.01);
    }
    ++m.pixels;
  }
  if (m.pixels) {
    m.mse /= 3.0 * double(m.pixels);
    m.rel_mse /= 3.0 * double(m.pixels);
  }
  return m;
}

std::optional<double> throughput_report(const IrradianceProvider& provider, const Bounds3& bbox, size_t n,
                                        uint64_t seed) {
  if (n == 0) return std::nullopt;
  Rng rng = Rng::keyed(stream_key(seed, 0x747075));
  std::vector<ProviderQuery> q(n);
  for (auto& x : q) {
    const Vec3 u{rng.uniform(), rng.uniform(), rng.uniform()};
    x.position = bbox.lo + Vec3(u.x * bbox.extent().x, u.y * bbox.extent().y, u.z * bbox.extent().z);
    x.normal = uniform_sample_sphere(rng.uniform(), rng.uniform());
    for (uint32_t k = 0; k < provider.param_count(); ++k) x.params[k] = rng.uniform();
  }
  std::vector<Rgb> out(n);
  const auto t0 = std::chrono::steady_clock::now();
  provider.query(q, out);
  const double dt = seconds_since(t0);
  return double(n) / std::max(dt, 1e-9);
}

ModelConfig model_for_budget(size_t budget_bytes, const Bounds3& bbox, uint32_t n_params) {
  auto fits = [&](const ModelConfig& c) { return NeuralField(c, bbox).memory_bytes(Precision::f16) <= budget_bytes; };
  // Rank: entries on the finest level (a tiny table on a fine level is mostly
  // collisions), then more levels, then the wider MLP.
  std::optional<ModelConfig> best;
  auto rank = [](const ModelConfig& c) {
    return std::tuple(c.hash.level_entries(c.hash.levels - 1), c.hash.levels, c.width);
  };
  for (int levels : {2, 4, 6, 8}) {
    for (int width : {16, 32, 64}) {
      ModelConfig c;
      c.width = width;
      c.n_params = n_params;
      c.hash.levels = levels;
      for (int t = 17; t >= 4; --t) {
        c.hash.log2_table = t;
        if (!fits(c)) continue;
        if (!best || rank(c) > rank(*best)) best = c;
        break;
      }
    }
  }
  if (best) return *best;
  for (int width : {64, 32, 16}) {
    ModelConfig c;
    c.width = width;
    c.n_params = n_params;
    c.encoding = PositionEncoding::frequency;
    if (fits(c)) return c;
  }
  throw InputError("no model architecture fits in " + std::to_string(budget_bytes) + " bytes");
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path, bool wall_time,
                     const std::string& budget_column) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "provider," << budget_column << ",actual_bytes,volume_mse,surface_mse,seed,wall_s\n";
  for (const SweepRow& r : rows) {
    f << r.provider << ',' << r.budget_bytes << ',' << r.actual_bytes << ',' << fmt(r.volume_mse) << ','
      << fmt(r.surface_mse) << ',' << r.seed << ',';
    if (wall_time) f << fmt(r.wall_s);
    f << '\n';
  }
  if (!f) throw IoError("failed writing " + path.string());
}

namespace {

NeuralField train_model(const ModelConfig& mc, const SampleSet& set, TrainConfig tc, uint64_t seed,
                        const std::string& what) {
  NeuralField model(mc, set.bbox);
  model.initialize(seed);
  tc.seed = seed;
  model.dataset_seed = set.seed;
  model.train_seed = seed;
  try {
    train(model, set, tc);
  } catch (const NumericalError& e) {
    throw NumericalError(what + ": " + e.what());
  }
  return model;
}

}  // namespace

std::vector<SweepRow> sweep_memory_error(const Scene& scene, const SampleSet& train_set, const SampleSet& eval,
                                         std::span<const size_t> budgets, const MemorySweepConfig& cfg,
                                         const SweepProgress& progress) {
  std::vector<SweepRow> rows;
  for (size_t budget : budgets) {
    const ModelConfig mc = model_for_budget(budget, train_set.bbox, train_set.n_extra_params);
    const int n = cubic_dims_for_budget(budget);
    for (uint64_t seed : cfg.seeds) {
      const std::vector<uint64_t> used{train_set.seed, seed};
      auto t0 = std::chrono::steady_clock::now();
      if (progress) progress("budget " + std::to_string(budget) + " seed " + std::to_string(seed) + ": training");
      NivProvider niv(train_model(mc, train_set, cfg.train, seed, "budget " + std::to_string(budget) + " bytes"));
      VolumetricMse m = volumetric_mse(niv, eval, used);
      rows.push_back({"niv", budget, niv.memory_bytes(), m.volume, m.surface, seed, seconds_since(t0)});

      t0 = std::chrono::steady_clock::now();
      if (progress) progress("budget " + std::to_string(budget) + " seed " + std::to_string(seed) + ": probes");
      ProbeBakeConfig pc = cfg.probes;
      pc.seed = seed;
      ProbeGrid grid = bake_grid(scene, {n, n, n}, pc);
      grid.quantize_f16();
      const double bake_s = seconds_since(t0);
      grid.heuristics = cfg.probe_heuristics;
      {
        ProbeProvider p(grid, &scene);
        m = volumetric_mse(p, eval, used);
        rows.push_back({p.kind(), budget, p.memory_bytes(), m.volume, m.surface, seed, seconds_since(t0)});
      }
      t0 = std::chrono::steady_clock::now();
      grid.heuristics = cfg.probe_rt_heuristics;
      {
        ProbeProvider p(grid, &scene);
        m = volumetric_mse(p, eval, used);
        rows.push_back({p.kind(), budget, p.memory_bytes(), m.volume, m.surface, seed, bake_s + seconds_since(t0)});
      }
    }
  }
  return rows;
}

std::vector<SweepRow> sweep_hash_table(const SampleSet& train_set, const SampleSet& eval,
                                       std::span<const int> log2_tables, const HashSweepConfig& cfg,
                                       const SweepProgress& progress) {
  if (cfg.model.encoding != PositionEncoding::hash_grid) throw InputError("hash sweep needs a hash-grid model");
  std::vector<SweepRow> rows;
  for (int t : log2_tables) {
    ModelConfig mc = cfg.model;
    mc.hash.log2_table = t;
    mc.n_params = train_set.n_extra_params;
    for (uint64_t seed : cfg.seeds) {
      if (progress) progress("T=2^" + std::to_string(t) + " seed " + std::to_string(seed));
      const auto t0 = std::chrono::steady_clock::now();
      NivProvider niv(train_model(mc, train_set, cfg.train, seed, "table 2^" + std::to_string(t)));
      const std::vector<uint64_t> used{train_set.seed, seed};
      const VolumetricMse m = volumetric_mse(niv, eval, used);
      rows.push_back({"niv", size_t(t), niv.memory_bytes(), m.volume, m.surface, seed, seconds_since(t0)});
    }
  }
  return rows;
}

std::vector<std::pair<size_t, double>> median_by_budget(const std::vector<SweepRow>& rows,
                                                        const std::string& provider) {
  std::vector<std::pair<size_t, double>> out;
  std::vector<size_t> order;
  for (const auto& r : rows)
    if (r.provider == provider && std::find(order.begin(), order.end(), r.budget_bytes) == order.end())
      order.push_back(r.budget_bytes);
  for (size_t b : order) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.provider == provider && r.budget_bytes == b) v.push_back(r.volume_mse);
    std::sort(v.begin(), v.end());
    const size_t k = v.size();
    out.emplace_back(b, k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]));
  }
  return out;
}

}  // namespace niv
