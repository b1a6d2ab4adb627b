#include "niv/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "niv/error.hpp"

namespace niv {

void freq_encode(std::span<const float> v, int bands, float* out) {
  for (float p : v) {
    double scale = std::numbers::pi;
    for (int b = 0; b < bands; ++b, scale *= 2) {
      *out++ = static_cast<float>(std::sin(scale * p));
      *out++ = static_cast<float>(std::cos(scale * p));
    }
  }
}

void HashGridConfig::validate() const {
  if (levels < 1 || levels > 16) throw InputError("hash grid: levels must be in [1,16]");
  if (features < 1 || features > 8) throw InputError("hash grid: features must be in [1,8]");
  if (log2_table < 4 || log2_table > 24) throw InputError("hash grid: table size log2 must be in [4,24]");
  if (base_resolution < 1) throw InputError("hash grid: base resolution must be >= 1");
  if (!(growth >= 1)) throw InputError("hash grid: growth factor must be >= 1");
}

int HashGridConfig::resolution(int level) const {
  return static_cast<int>(std::floor(base_resolution * std::pow(growth, level) + 1e-9));
}

size_t HashGridConfig::level_entries(int level) const {
  const size_t side = static_cast<size_t>(resolution(level)) + 1;
  return std::min<size_t>(side * side * side, table_size());
}

bool HashGridConfig::dense(int level) const {
  const size_t side = static_cast<size_t>(resolution(level)) + 1;
  return side * side * side <= table_size();
}

size_t HashGridConfig::total_entries() const {
  size_t n = 0;
  for (int l = 0; l < levels; ++l) n += level_entries(l);
  return n;
}

HashGrid::HashGrid(const HashGridConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  size_t off = 0;
  for (int l = 0; l < cfg_.levels; ++l) {
    offsets_.push_back(off);
    res_.push_back(cfg_.resolution(l));
    off += cfg_.level_entries(l);
  }
}

HashGrid::Corners HashGrid::corners(const float x[3], int level) const {
  const int n = res_[level];
  const bool dense = cfg_.dense(level);
  const uint32_t side = static_cast<uint32_t>(n) + 1;
  const uint32_t mask = cfg_.table_size() - 1;
  uint32_t base[3];
  float frac[3];
  for (int a = 0; a < 3; ++a) {
    const float s = std::clamp(x[a], 0.0f, 1.0f) * static_cast<float>(n);
    const int i = std::min(static_cast<int>(s), n - 1);
    base[a] = static_cast<uint32_t>(i);
    frac[a] = s - static_cast<float>(i);
  }
  Corners c;
  for (int k = 0; k < 8; ++k) {
    const uint32_t i = base[0] + (k & 1), j = base[1] + ((k >> 1) & 1), z = base[2] + ((k >> 2) & 1);
    c.index[k] = dense ? i + side * (j + side * z) : spatial_hash(i, j, z) & mask;
    c.weight[k] = ((k & 1) ? frac[0] : 1 - frac[0]) * ((k & 2) ? frac[1] : 1 - frac[1]) *
                  ((k & 4) ? frac[2] : 1 - frac[2]);
  }
  return c;
}

void HashGrid::encode(const float* table, const float x[3], float* out) const {
  const int f = cfg_.features;
  for (int l = 0; l < cfg_.levels; ++l) {
    const Corners c = corners(x, l);
    const float* level = table + offsets_[l] * f;
    float* o = out + l * f;
    std::fill(o, o + f, 0.0f);
    for (int k = 0; k < 8; ++k) {
      const float* e = level + static_cast<size_t>(c.index[k]) * f;
      for (int q = 0; q < f; ++q) o[q] += c.weight[k] * e[q];
    }
  }
}

}  // namespace niv
