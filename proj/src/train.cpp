#include "niv/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "niv/error.hpp"
#include "niv/rng.hpp"

namespace niv {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("train: batch size must be >= 1");
  if (iterations < 1) throw InputError("train: iterations must be >= 1");
  if (warm_iterations >= iterations) throw InputError("train: warm iterations must be < iterations");
  if (!(lr_final > 0 && lr_final < lr_initial)) throw InputError("train: need 0 < lr_final < lr_initial");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw InputError("train: Adam betas must be in [0,1)");
  if (trace_interval < 1) throw InputError("train: trace interval must be >= 1");
}

TrainConfig TrainConfig::scaled(size_t iterations, size_t batch_size, uint64_t seed) {
  TrainConfig c;
  c.iterations = iterations;
  c.warm_iterations = iterations / 5;
  c.batch_size = batch_size;
  c.seed = seed;
  return c;
}

double lr_schedule(size_t iter, const TrainConfig& cfg) {
  if (iter < cfg.warm_iterations) return cfg.lr_initial;
  const double t = double(iter - cfg.warm_iterations) / double(cfg.iterations - cfg.warm_iterations);
  return cfg.lr_initial * std::pow(cfg.lr_final / cfg.lr_initial, t);
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& st, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grads.size()) throw InputError("adam: parameter/gradient size mismatch");
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0f);
    st.v.assign(params.size(), 0.0f);
    st.step = 0;
  }
  ++st.step;
  const double c1 = 1 - std::pow(beta1, double(st.step));
  const double c2 = 1 - std::pow(beta2, double(st.step));
  const auto b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  const auto step = static_cast<float>(lr / c1);
  const auto rc2 = static_cast<float>(1 / std::sqrt(c2));
  const auto e = static_cast<float>(eps);
  for (size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    st.m[i] = b1 * st.m[i] + (1 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1 - b2) * g * g;
    params[i] -= step * st.m[i] / (std::sqrt(st.v[i]) * rc2 + e);
  }
}

FieldInput sample_input(const IrradianceSample& s) {
  FieldInput in;
  in.pos = s.position;
  in.dir = s.direction;
  in.params = s.params;
  return in;
}

TrainResult train(NeuralField& model, const SampleSet& set, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (set.samples.empty()) throw InputError("train: empty sample set");
  if (set.n_extra_params != mc.n_params)
    throw InputError("train: sample set has " + std::to_string(set.n_extra_params) +
                     " extra parameter(s) but the model expects " + std::to_string(mc.n_params));
  if (set.quantity != mc.quantity) throw InputError("train: sample set and model target different quantities");

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  Rng rng(cfg.seed, 0x747261696e);
  std::vector<uint32_t> order(set.samples.size());
  size_t cursor = order.size();  // forces a shuffle on first use
  auto next_index = [&]() {
    if (cursor == order.size()) {
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<uint32_t>(i);
      for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<uint32_t>(i + 1))]);
      cursor = 0;
    }
    return order[cursor++];
  };

  std::vector<FieldInput> inputs(cfg.batch_size);
  std::vector<Rgb32> targets(cfg.batch_size);
  std::vector<float> grad;
  AdamState adam;
  std::vector<float> snapshot = model.params();
  size_t snapshot_iter = 0;
  double window = 0;
  size_t window_n = 0;

  for (size_t it = 0; it < cfg.iterations; ++it) {
    for (size_t b = 0; b < cfg.batch_size; ++b) {
      const IrradianceSample& s = set.samples[next_index()];
      inputs[b] = sample_input(s);
      targets[b] = s.target;
    }
    double loss;
    try {
      loss = model.loss_gradient(inputs, targets, grad, cfg.loss);
      if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
    } catch (const NumericalError& e) {
      model.params() = snapshot;
      throw NumericalError("training diverged at iteration " + std::to_string(it) + " (" + e.what() +
                           "); parameters restored to iteration " + std::to_string(snapshot_iter));
    }
    const double lr = lr_schedule(it, cfg);
    adam_step(model.params(), grad, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    window += loss;
    ++window_n;
    if ((it + 1) % cfg.trace_interval == 0 || it + 1 == cfg.iterations) {
      const LossTracePoint p{it + 1, window / double(window_n), lr};
      result.trace.push_back(p);
      if (callbacks.on_trace) callbacks.on_trace(p);
      window = 0;
      window_n = 0;
      bool finite = true;
      for (float v : model.params()) finite &= std::isfinite(v);
      if (!finite) {
        model.params() = snapshot;
        throw NumericalError("training diverged by iteration " + std::to_string(it + 1) +
                             " (non-finite parameters); restored to iteration " + std::to_string(snapshot_iter));
      }
      snapshot = model.params();
      snapshot_iter = it + 1;
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_loss_trace(const std::vector<LossTracePoint>& trace, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "iteration,loss,lr\n";
  os.precision(9);
  for (const auto& p : trace) os << p.iteration << ',' << p.loss << ',' << p.lr << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace niv
