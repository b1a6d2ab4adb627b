#include "niv/neural_field.hpp"

#include <Eigen/Core>
#include <cstring>
#include <fstream>

#include "niv/error.hpp"
#include "niv/parallel.hpp"
#include "niv/rng.hpp"

namespace niv {

namespace {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;
using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<const RowMajorF>;
using BiasMap = Eigen::Map<const Eigen::VectorXf>;

constexpr size_t kChunk = 1024;
constexpr float kLossEps = 0.01f;

float softplus(float y) { return y > 15.0f ? y : std::log1p(std::exp(y)); }
float sigmoid(float y) { return 1.0f / (1.0f + std::exp(-y)); }

}  // namespace

void ModelConfig::validate() const {
  if (encoding == PositionEncoding::hash_grid) hash.validate();
  if (freq_bands < 1 || freq_bands > 16) throw InputError("model: frequency bands must be in [1,16]");
  if (direction_bands < 0 || direction_bands > 16) throw InputError("model: direction bands must be in [0,16]");
  if (n_params > kMaxExtraParams) throw InputError("model: at most 2 extra parameters");
  if (width < 1 || width > 1024) throw InputError("model: width must be in [1,1024]");
}

size_t ModelConfig::encoding_width() const {
  return encoding == PositionEncoding::hash_grid ? hash.output_width() : 0;
}

size_t ModelConfig::input_width() const {
  const size_t pos = encoding == PositionEncoding::hash_grid ? hash.output_width() : freq_width(3, freq_bands);
  const size_t dir = 3 + (direction_bands ? freq_width(3, direction_bands) : 0);
  return pos + dir + freq_width(n_params, freq_bands);
}

double relative_l2(const Rgb32& p, const Rgb32& t, LossNormalization norm) {
  double sum = 0;
  if (norm == LossNormalization::per_channel) {
    for (int c = 0; c < 3; ++c) sum += double(p[c] - t[c]) * (p[c] - t[c]) / (double(p[c]) * p[c] + 0.01);
    return sum / 3;
  }
  double d = 0;
  for (int c = 0; c < 3; ++c) {
    sum += double(p[c] - t[c]) * (p[c] - t[c]);
    d += double(p[c]) * p[c];
  }
  return sum / 3 / (d / 3 + 0.01);
}

NeuralField::NeuralField(const ModelConfig& cfg, const Bounds3& bbox) : cfg_(cfg), bbox_(bbox) {
  cfg_.validate();
  if (cfg_.encoding == PositionEncoding::hash_grid) grid_ = HashGrid(cfg_.hash);
  mlp_offset_ = cfg_.encoding == PositionEncoding::hash_grid
                    ? cfg_.hash.total_entries() * static_cast<size_t>(cfg_.hash.features)
                    : 0;
  dims_ = {cfg_.input_width(), size_t(cfg_.width), size_t(cfg_.width), size_t(cfg_.width), 3};
  size_t off = mlp_offset_;
  for (int l = 0; l < kLayers; ++l) {
    w_off_[l] = off;
    off += dims_[l] * dims_[l + 1];
    b_off_[l] = off;
    off += dims_[l + 1];
  }
  params_.assign(off, 0.0f);
}

void NeuralField::initialize(uint64_t seed) {
  Rng rng(seed, 0x6e6976);
  for (size_t i = 0; i < mlp_offset_; ++i) params_[i] = static_cast<float>((rng.uniform() * 2 - 1) * 1e-4);
  for (int l = 0; l < kLayers; ++l) {
    const double bound = std::sqrt(6.0 / double(dims_[l]));
    for (size_t i = 0; i < dims_[l] * dims_[l + 1]; ++i)
      params_[w_off_[l] + i] = static_cast<float>((rng.uniform() * 2 - 1) * bound);
    std::fill_n(params_.begin() + b_off_[l], dims_[l + 1], 0.0f);
  }
}

std::string NeuralField::block_name(size_t i) const {
  if (i < mlp_offset_) {
    const size_t entry = i / cfg_.hash.features;
    for (int l = cfg_.hash.levels - 1; l >= 0; --l)
      if (entry >= grid_.level_offset(l)) return "hash level " + std::to_string(l);
  }
  for (int l = kLayers - 1; l >= 0; --l) {
    if (i >= b_off_[l]) return "layer " + std::to_string(l) + " bias";
    if (i >= w_off_[l]) return "layer " + std::to_string(l) + " weights";
  }
  return "unknown";
}

float NeuralField::activate(float y) const {
  switch (cfg_.activation) {
    case OutputActivation::softplus: return softplus(y);
    case OutputActivation::relu: return std::max(y, 0.0f);
    case OutputActivation::identity: return y;
  }
  return y;
}

void NeuralField::encode(const FieldInput& in, float* out) const {
  if (cfg_.encoding == PositionEncoding::hash_grid) {
    grid_.encode(params_.data(), in.pos.data(), out);
    out += cfg_.hash.output_width();
  } else {
    std::array<float, 3> p;
    for (int a = 0; a < 3; ++a) p[a] = std::clamp(in.pos[a], 0.0f, 1.0f);
    freq_encode(p, cfg_.freq_bands, out);
    out += freq_width(3, cfg_.freq_bands);
  }
  std::copy(in.dir.begin(), in.dir.end(), out);
  out += 3;
  if (cfg_.direction_bands) {
    freq_encode(in.dir, cfg_.direction_bands, out);
    out += freq_width(3, cfg_.direction_bands);
  }
  if (cfg_.n_params) freq_encode(std::span(in.params.data(), cfg_.n_params), cfg_.freq_bands, out);
}

FieldInput NeuralField::make_input(const Vec3& world_pos, const Vec3& dir,
                                   std::span<const double> params) const {
  if (params.size() != cfg_.n_params)
    throw InputError("model expects " + std::to_string(cfg_.n_params) + " extra parameter(s), got " +
                     std::to_string(params.size()));
  FieldInput in;
  const Vec3 u = to_unit_cube(bbox_, world_pos);
  for (int a = 0; a < 3; ++a) {
    in.pos[a] = static_cast<float>(std::clamp(u[a], 0.0, 1.0));
    in.dir[a] = static_cast<float>(dir[a]);
  }
  for (size_t k = 0; k < params.size(); ++k) in.params[k] = static_cast<float>(params[k]);
  return in;
}

struct NeuralField::Layers {
  std::array<RowMajorF, kLayers> w;
  std::array<Eigen::VectorXf, kLayers> b;
};

NeuralField::Layers NeuralField::layers() const {
  Layers net;
  for (int l = 0; l < kLayers; ++l) {
    net.w[l] = WeightMap(params_.data() + w_off_[l], dims_[l + 1], dims_[l]);
    net.b[l] = BiasMap(params_.data() + b_off_[l], dims_[l + 1]);
  }
  return net;
}

void NeuralField::forward_chunk(const Layers& net, std::span<const FieldInput> in, std::span<Rgb32> out) const {
  const auto n = static_cast<Eigen::Index>(in.size());
  MatF a(dims_[0], n);
  for (Eigen::Index j = 0; j < n; ++j) encode(in[j], a.col(j).data());
  for (int l = 0; l < kLayers; ++l) {
    MatF z = net.w[l] * a;
    z.colwise() += net.b[l];
    if (l + 1 < kLayers) a = z.cwiseMax(0.0f);
    else a = std::move(z);
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (int c = 0; c < 3; ++c) out[j][c] = activate(a(c, j));
}

void NeuralField::infer(std::span<const FieldInput> in, std::span<Rgb32> out) const {
  if (in.size() != out.size()) throw InputError("infer: size mismatch");
  const size_t chunks = (in.size() + kChunk - 1) / kChunk;
  const Layers net = layers();
  parallel_for(chunks, [&](size_t c) {
    const size_t lo = c * kChunk, hi = std::min(in.size(), lo + kChunk);
    forward_chunk(net, in.subspan(lo, hi - lo), out.subspan(lo, hi - lo));
  });
}

Rgb32 NeuralField::infer_one(const FieldInput& in) const {
  Rgb32 out;
  forward_chunk(layers(), std::span(&in, 1), std::span(&out, 1));
  return out;
}

double NeuralField::loss_gradient(std::span<const FieldInput> in, std::span<const Rgb32> targets,
                                  std::vector<float>& grad, LossNormalization norm) const {
  if (in.empty()) throw InputError("loss_gradient: empty batch");
  if (in.size() != targets.size()) throw InputError("loss_gradient: size mismatch");
  const size_t total = in.size();
  const size_t chunks = (total + kChunk - 1) / kChunk;
  const size_t mlp_size = params_.size() - mlp_offset_;
  const size_t enc_w = cfg_.encoding_width();
  const bool hash = cfg_.encoding == PositionEncoding::hash_grid;

  std::vector<std::vector<float>> mlp_grads(chunks);
  std::vector<MatF> enc_grads(chunks);
  std::vector<double> losses(chunks, 0.0);
  const float inv_batch = 1.0f / static_cast<float>(total);
  const Layers net = layers();

  parallel_for(chunks, [&](size_t c) {
    const size_t lo = c * kChunk, hi = std::min(total, lo + kChunk);
    const auto n = static_cast<Eigen::Index>(hi - lo);
    std::array<MatF, kLayers> acts;  // inputs to each layer
    acts[0].resize(dims_[0], n);
    for (Eigen::Index j = 0; j < n; ++j) encode(in[lo + j], acts[0].col(j).data());
    MatF y;
    for (int l = 0; l < kLayers; ++l) {
      MatF z = net.w[l] * acts[l];
      z.colwise() += net.b[l];
      if (l + 1 < kLayers) acts[l + 1] = z.cwiseMax(0.0f);
      else y = std::move(z);
    }

    // dL/dy through the output activation
    MatF dy(3, n);
    double loss = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      Rgb32 p;
      for (int k = 0; k < 3; ++k) p[k] = activate(y(k, j));
      const Rgb32& t = targets[lo + j];
      loss += relative_l2(p, t, norm);
      float denom_shared = 0;
      if (norm == LossNormalization::per_sample) denom_shared = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 3 + kLossEps;
      for (int k = 0; k < 3; ++k) {
        const float denom = norm == LossNormalization::per_channel ? p[k] * p[k] + kLossEps : denom_shared;
        const float dp = 2.0f * (p[k] - t[k]) / (3.0f * denom) * inv_batch;
        float da = 1.0f;
        switch (cfg_.activation) {
          case OutputActivation::softplus: da = sigmoid(y(k, j)); break;
          case OutputActivation::relu: da = y(k, j) > 0 ? 1.0f : 0.0f; break;
          case OutputActivation::identity: break;
        }
        dy(k, j) = dp * da;
      }
    }
    losses[c] = loss;

    std::vector<float>& g = mlp_grads[c];
    g.assign(mlp_size, 0.0f);
    MatF delta = std::move(dy);
    for (int l = kLayers - 1; l >= 0; --l) {
      Eigen::Map<RowMajorF> gw(g.data() + (w_off_[l] - mlp_offset_), dims_[l + 1], dims_[l]);
      Eigen::Map<Eigen::VectorXf> gb(g.data() + (b_off_[l] - mlp_offset_), dims_[l + 1]);
      const RowMajorF dw = delta * acts[l].transpose();
      const Eigen::VectorXf db = delta.rowwise().sum();
      gw = dw;
      gb = db;
      if (l == 0 && !hash) break;
      MatF back = net.w[l].transpose() * delta;
      if (l > 0) {
        delta = (acts[l].array() > 0.0f).select(back, 0.0f);
      } else {
        enc_grads[c] = back.topRows(static_cast<Eigen::Index>(enc_w));
      }
    }
  });

  grad.assign(params_.size(), 0.0f);
  double loss = 0;
  for (size_t c = 0; c < chunks; ++c) {
    loss += losses[c];
    float* dst = grad.data() + mlp_offset_;
    const std::vector<float>& g = mlp_grads[c];
    for (size_t i = 0; i < mlp_size; ++i) dst[i] += g[i];
  }
  if (hash) {
    // Serial scatter in sample order; collided slots simply sum.
    const int f = cfg_.hash.features;
    for (size_t c = 0; c < chunks; ++c) {
      const size_t lo = c * kChunk, hi = std::min(total, lo + kChunk);
      const MatF& de = enc_grads[c];
      for (size_t j = lo; j < hi; ++j) {
        const auto col = static_cast<Eigen::Index>(j - lo);
        for (int l = 0; l < cfg_.hash.levels; ++l) {
          const HashGrid::Corners cr = grid_.corners(in[j].pos.data(), l);
          float* level = grad.data() + grid_.level_offset(l) * f;
          for (int k = 0; k < 8; ++k) {
            if (cr.weight[k] == 0.0f) continue;
            float* e = level + static_cast<size_t>(cr.index[k]) * f;
            for (int q = 0; q < f; ++q) e[q] += cr.weight[k] * de(l * f + q, col);
          }
        }
      }
    }
  }
  for (size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NumericalError("non-finite gradient in " + block_name(i));
  return loss / static_cast<double>(total);
}

void NeuralField::quantize_f16() {
  for (float& p : params_) p = static_cast<float>(Eigen::half(p));
}

// ---- file format ----

namespace {

constexpr char kMagic[4] = {'N', 'I', 'V', 'M'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated model file");
  return v;
}

}  // namespace

size_t model_header_bytes() { return 4 + 4 * 7 + 8 + 4 * 6 + 8 * 6 + 8 * 3; }

void save_model(const NeuralField& m, const std::filesystem::path& path, Precision precision) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  const ModelConfig& c = m.config();
  os.write(kMagic, 4);
  put<uint32_t>(os, kVersion);
  put<uint32_t>(os, static_cast<uint32_t>(c.encoding));
  put<uint32_t>(os, c.freq_bands);
  put<uint32_t>(os, c.hash.levels);
  put<uint32_t>(os, c.hash.features);
  put<uint32_t>(os, c.hash.log2_table);
  put<uint32_t>(os, c.hash.base_resolution);
  put<double>(os, c.hash.growth);
  put<uint32_t>(os, c.direction_bands);
  put<uint32_t>(os, c.n_params);
  put<uint32_t>(os, c.width);
  put<uint32_t>(os, static_cast<uint32_t>(c.activation));
  put<uint32_t>(os, static_cast<uint32_t>(c.quantity));
  put<uint32_t>(os, static_cast<uint32_t>(precision));
  for (const Vec3* v : {&m.bbox().lo, &m.bbox().hi})
    for (int a = 0; a < 3; ++a) put<double>(os, (*v)[a]);
  put<uint64_t>(os, m.train_seed);
  put<uint64_t>(os, m.dataset_seed);
  put<uint64_t>(os, m.param_count());
  if (precision == Precision::f32) {
    os.write(reinterpret_cast<const char*>(m.params().data()),
             static_cast<std::streamsize>(m.param_count() * sizeof(float)));
  } else {
    std::vector<Eigen::half> h(m.param_count());
    for (size_t i = 0; i < h.size(); ++i) h[i] = Eigen::half(m.params()[i]);
    os.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size() * 2));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

NeuralField load_model(const std::filesystem::path& path, Precision* precision_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + ": not a NIV model file");
  if (get<uint32_t>(is) != kVersion) throw IoError(path.string() + ": unsupported model version");
  ModelConfig c;
  const auto enc = get<uint32_t>(is);
  if (enc > 1) throw IoError(path.string() + ": unknown encoding");
  c.encoding = static_cast<PositionEncoding>(enc);
  c.freq_bands = static_cast<int>(get<uint32_t>(is));
  c.hash.levels = static_cast<int>(get<uint32_t>(is));
  c.hash.features = static_cast<int>(get<uint32_t>(is));
  c.hash.log2_table = static_cast<int>(get<uint32_t>(is));
  c.hash.base_resolution = static_cast<int>(get<uint32_t>(is));
  c.hash.growth = get<double>(is);
  c.direction_bands = static_cast<int>(get<uint32_t>(is));
  c.n_params = get<uint32_t>(is);
  c.width = static_cast<int>(get<uint32_t>(is));
  const auto act = get<uint32_t>(is);
  const auto qty = get<uint32_t>(is);
  const auto prec = get<uint32_t>(is);
  if (act > 2 || qty > 1 || prec > 1) throw IoError(path.string() + ": corrupt model header");
  c.activation = static_cast<OutputActivation>(act);
  c.quantity = static_cast<TargetQuantity>(qty);
  Bounds3 bbox;
  for (Vec3* v : {&bbox.lo, &bbox.hi})
    for (int a = 0; a < 3; ++a) (*v)[a] = get<double>(is);
  NeuralField m;
  try {
    m = NeuralField(c, bbox);
  } catch (const InputError& e) {
    throw IoError(path.string() + ": corrupt model header (" + e.what() + ")");
  }
  m.train_seed = get<uint64_t>(is);
  m.dataset_seed = get<uint64_t>(is);
  const auto count = get<uint64_t>(is);
  if (count != m.param_count()) throw IoError(path.string() + ": parameter count does not match architecture");
  if (prec == 0) {
    if (!is.read(reinterpret_cast<char*>(m.params().data()), static_cast<std::streamsize>(count * 4)))
      throw IoError(path.string() + ": truncated model file");
  } else {
    std::vector<Eigen::half> h(count);
    if (!is.read(reinterpret_cast<char*>(h.data()), static_cast<std::streamsize>(count * 2)))
      throw IoError(path.string() + ": truncated model file");
    for (size_t i = 0; i < count; ++i) m.params()[i] = static_cast<float>(h[i]);
  }
  if (precision_out) *precision_out = static_cast<Precision>(prec);
  return m;
}

}  // namespace niv
