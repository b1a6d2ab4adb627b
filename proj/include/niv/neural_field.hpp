#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "niv/dataset.hpp"
#include "niv/encoding.hpp"
#include "niv/math.hpp"

namespace niv {

enum class PositionEncoding : uint32_t { frequency = 0, hash_grid = 1 };
enum class OutputActivation : uint32_t { softplus = 0, relu = 1, identity = 2 };
enum class Precision : uint32_t { f32 = 0, f16 = 1 };

struct ModelConfig {
  PositionEncoding encoding = PositionEncoding::hash_grid;
  int freq_bands = 8;          // position (frequency mode) and extra params
  HashGridConfig hash;
  int direction_bands = 0;     // 0: raw direction only
  uint32_t n_params = 0;
  int width = 64;
  OutputActivation activation = OutputActivation::softplus;
  TargetQuantity quantity = TargetQuantity::irradiance;

  void validate() const;
  size_t input_width() const;
  size_t encoding_width() const;  // the trainable (hash) part at the front, else 0
};

// Position in the unit cube, unit direction, extra params in [0,1].
struct FieldInput {
  std::array<float, 3> pos{};
  std::array<float, 3> dir{};
  std::array<float, kMaxExtraParams> params{};
};
using Rgb32 = std::array<float, 3>;

enum class LossNormalization : uint32_t { per_channel = 0, per_sample = 1 };

// Relative L2: mean over channels of (p - t)^2 / (sg(p)^2 + 0.01). Per-sample
// mode shares one denominator, mean_c p_c^2 + 0.01.
double relative_l2(const Rgb32& pred, const Rgb32& target,
                   LossNormalization norm = LossNormalization::per_channel);

// The field E_theta: encoding + 4-layer MLP. Parameters live in one flat
// vector: hash latents (level-major), then per layer W (row-major) and b.
class NeuralField {
 public:
  static constexpr int kLayers = 4;

  NeuralField() = default;
  NeuralField(const ModelConfig& cfg, const Bounds3& bbox);

  const ModelConfig& config() const { return cfg_; }
  const Bounds3& bbox() const { return bbox_; }
  const HashGrid& grid() const { return grid_; }

  // He-uniform weights, zero biases, latents uniform in [-1e-4, 1e-4].
  void initialize(uint64_t seed);

  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }
  size_t param_count() const { return params_.size(); }
  size_t hash_param_count() const { return mlp_offset_; }
  size_t memory_bytes(Precision p) const { return param_count() * (p == Precision::f16 ? 2 : 4); }

  // Layer shapes and parameter offsets.
  size_t layer_in(int l) const { return dims_[l]; }
  size_t layer_out(int l) const { return dims_[l + 1]; }
  size_t weight_offset(int l) const { return w_off_[l]; }
  size_t bias_offset(int l) const { return b_off_[l]; }
  // Human-readable name of the block containing parameter i.
  std::string block_name(size_t i) const;

  void encode(const FieldInput& in, float* out) const;
  float activate(float y) const;

  // Batched inference; safe for concurrent callers.
  void infer(std::span<const FieldInput> in, std::span<Rgb32> out) const;
  Rgb32 infer_one(const FieldInput& in) const;

  // Mean relative-L2 loss over the batch and its gradient w.r.t. every
  // parameter (written to grad, which is resized). Deterministic regardless
  // of worker count.
  double loss_gradient(std::span<const FieldInput> in, std::span<const Rgb32> targets,
                       std::vector<float>& grad, LossNormalization norm) const;

  // Rounds every parameter through f16 (what a half-precision file stores).
  void quantize_f16();

  // Convenience for world-space queries.
  FieldInput make_input(const Vec3& world_pos, const Vec3& dir, std::span<const double> params) const;

  // Recorded with the model so evaluation can refuse overlapping seeds.
  uint64_t train_seed = 0;
  uint64_t dataset_seed = 0;

 private:
  // Weights copied into aligned storage, so Eigen's vectorized paths don't
  // depend on where params_ happened to be allocated.
  struct Layers;
  Layers layers() const;
  void forward_chunk(const Layers& net, std::span<const FieldInput> in, std::span<Rgb32> out) const;

  ModelConfig cfg_;
  Bounds3 bbox_;
  HashGrid grid_;
  std::vector<float> params_;
  size_t mlp_offset_ = 0;
  std::array<size_t, kLayers + 1> dims_{};
  std::array<size_t, kLayers> w_off_{}, b_off_{};
};

void save_model(const NeuralField& model, const std::filesystem::path& path, Precision precision);
NeuralField load_model(const std::filesystem::path& path, Precision* precision = nullptr);
// Bytes of the fixed header that precedes the parameter blob.
size_t model_header_bytes();

}  // namespace niv
