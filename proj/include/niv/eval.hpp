#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "niv/dataset.hpp"
#include "niv/probes.hpp"
#include "niv/provider.hpp"
#include "niv/train.hpp"

namespace niv {

struct VolumetricMse {
  double volume = 0;   // off-surface samples
  double surface = 0;  // on-surface samples
  double all = 0;
  size_t n_volume = 0, n_surface = 0;
};

// Mean over samples and channels of (E_provider - target)^2. Refuses an eval
// set whose seed is one of `training_seeds`.
VolumetricMse volumetric_mse(const IrradianceProvider& provider, const SampleSet& eval,
                             std::span<const uint64_t> training_seeds = {});

// Same, with the per-sample signed error (mean over channels) handed back too.
VolumetricMse volumetric_mse(const IrradianceProvider& provider, const SampleSet& eval,
                             std::span<const uint64_t> training_seeds, std::vector<double>* signed_error);

// MSE of predicting the per-channel mean target everywhere.
double constant_mean_mse(const SampleSet& set);

struct ImageMetrics {
  double mse = 0;
  double rel_mse = 0;  // (f - r)^2 / (f^2 + 0.01), f the rendered frame
  size_t pixels = 0;
};

// `mask` (optional) selects the pixels that count, e.g. G-buffer coverage.
ImageMetrics image_metrics(const FrameHDR& frame, const FrameHDR& reference, std::span<const uint8_t> mask = {});

// Batched query rate on random points in `bbox`; nothing when n == 0.
std::optional<double> throughput_report(const IrradianceProvider& provider, const Bounds3& bbox, size_t n,
                                        uint64_t seed = 0);

// Architecture ladder used to fill a memory budget: W in {16, 32, 64}, hash
// levels in {2, 4, 6, 8}, table size up to 2^17 chosen to fit (f16). Prefers
// the most entries on the finest level, then more levels, then the wider MLP;
// frequency encoding only when no grid fits.
ModelConfig model_for_budget(size_t budget_bytes, const Bounds3& bbox, uint32_t n_params = 0);

struct SweepRow {
  std::string provider;
  size_t budget_bytes = 0;  // hash sweep: log2 of the table size
  size_t actual_bytes = 0;
  double volume_mse = 0;
  double surface_mse = 0;
  uint64_t seed = 0;
  double wall_s = 0;
};

// With `wall_time` off the wall_s column is left empty, so reruns produce
// identical bytes.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path, bool wall_time,
                     const std::string& budget_column = "budget_bytes");

struct MemorySweepConfig {
  TrainConfig train;
  std::vector<uint64_t> seeds{1};
  ProbeBakeConfig probes;
  ProbeHeuristics probe_heuristics;     // plain probes
  ProbeHeuristics probe_rt_heuristics;  // "+RT": visibility replaces the cosine falloff
  MemorySweepConfig() {
    probe_rt_heuristics.cosine_falloff = false;
    probe_rt_heuristics.rt_visibility = true;
  }
};

using SweepProgress = std::function<void(const std::string&)>;

// Per budget: NIV trained on `train`, one probe bake queried with and without
// ray-traced visibility; all scored on `eval`. Three rows per budget per seed.
std::vector<SweepRow> sweep_memory_error(const Scene& scene, const SampleSet& train, const SampleSet& eval,
                                         std::span<const size_t> budgets, const MemorySweepConfig& cfg,
                                         const SweepProgress& progress = {});

struct HashSweepConfig {
  ModelConfig model;  // levels etc. fixed; log2_table swept
  TrainConfig train;
  std::vector<uint64_t> seeds{1};
};

std::vector<SweepRow> sweep_hash_table(const SampleSet& train, const SampleSet& eval, std::span<const int> log2_tables,
                                       const HashSweepConfig& cfg, const SweepProgress& progress = {});

// Median of volume_mse over seeds for each distinct budget_bytes, in order of
// first appearance.
std::vector<std::pair<size_t, double>> median_by_budget(const std::vector<SweepRow>& rows,
                                                        const std::string& provider);

}  // namespace niv
