#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "niv/dataset.hpp"
#include "niv/neural_field.hpp"

namespace niv {

struct TrainConfig {
  size_t batch_size = size_t{1} << 16;
  size_t iterations = 50000;
  double lr_initial = 1e-2;
  double lr_final = 1e-4;
  size_t warm_iterations = 10000;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  LossNormalization loss = LossNormalization::per_channel;
  size_t trace_interval = 100;

  void validate() const;
  // Same schedule shape at a different length: warm-up stays 1/5 of the run.
  static TrainConfig scaled(size_t iterations, size_t batch_size, uint64_t seed);
};

double lr_schedule(size_t iter, const TrainConfig& cfg);

struct AdamState {
  std::vector<float> m, v;
  uint64_t step = 0;
};

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct LossTracePoint {
  size_t iteration;  // last iteration of the window
  double loss;       // mean over the window
  double lr;
};

struct TrainResult {
  std::vector<LossTracePoint> trace;
  double seconds = 0;
};

struct TrainCallbacks {
  std::function<void(const LossTracePoint&)> on_trace;
};

// Minibatches are drawn from per-epoch shuffles of the set. On a NaN loss or
// gradient the parameters are restored to the last trace point and a
// NumericalError is thrown.
TrainResult train(NeuralField& model, const SampleSet& set, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

FieldInput sample_input(const IrradianceSample& s);

void write_loss_trace(const std::vector<LossTracePoint>& trace, const std::filesystem::path& path);

}  // namespace niv
