#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace niv {

// [sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{B-1} pi p), cos(2^{B-1} pi p)] per
// scalar, written to out[0 .. 2*B*v.size()).
void freq_encode(std::span<const float> v, int bands, float* out);
inline size_t freq_width(size_t scalars, int bands) { return 2 * static_cast<size_t>(bands) * scalars; }

struct HashGridConfig {
  int levels = 2;           // 2..8
  int features = 4;
  int log2_table = 17;
  int base_resolution = 16;
  double growth = 1.4142135623730951;

  void validate() const;
  uint32_t table_size() const { return uint32_t{1} << log2_table; }
  int resolution(int level) const;
  // Entries on this level: (N+1)^3 when that fits in the table (dense), else T.
  size_t level_entries(int level) const;
  bool dense(int level) const;
  size_t total_entries() const;
  size_t output_width() const { return static_cast<size_t>(levels) * features; }
};

// Multi-resolution grid over the unit cube. Owns no parameters: the latent
// table lives in the model's flat parameter vector, level-major, `features`
// floats per entry.
class HashGrid {
 public:
  struct Corners {
    std::array<uint32_t, 8> index;  // entry index within the level
    std::array<float, 8> weight;
  };

  HashGrid() = default;
  explicit HashGrid(const HashGridConfig& cfg);

  const HashGridConfig& config() const { return cfg_; }
  size_t level_offset(int level) const { return offsets_[level]; }  // in entries

  // Corner entries and trilinear weights of x (clamped to [0,1]^3) on a level.
  Corners corners(const float x[3], int level) const;
  // Concatenated interpolated latents, coarse to fine.
  void encode(const float* table, const float x[3], float* out) const;

  static uint32_t spatial_hash(uint32_t i, uint32_t j, uint32_t k) {
    return i * 1u ^ j * 2654435761u ^ k * 805459861u;
  }

 private:
  HashGridConfig cfg_;
  std::vector<size_t> offsets_;
  std::vector<int> res_;
};

}  // namespace niv
