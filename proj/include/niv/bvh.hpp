#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "niv/math.hpp"

namespace niv {

struct Triangle {
  Vec3 p0, p1, p2;
  Vec3 n0, n1, n2;  // shading normals at the corners
  Vec3 ng;          // unit geometric normal, right-handed winding
  double area = 0;
  uint32_t material = 0;
  uint32_t instance = 0;

  Vec3 point(double b1, double b2) const { return p0 * (1 - b1 - b2) + p1 * b1 + p2 * b2; }
  Vec3 shading_normal(double b1, double b2) const;
  Bounds3 bounds() const {
    Bounds3 b;
    b.expand(p0);
    b.expand(p1);
    b.expand(p2);
    return b;
  }
};

struct TriangleHit {
  double t = 0;
  double b1 = 0, b2 = 0;
  uint32_t index = 0;  // index within the owning TriangleSet
};

// Moller-Trumbore. Returns t in (0, t_max) or nothing.
std::optional<TriangleHit> intersect_triangle(const Triangle& tri, const Ray& ray, double t_max);

// Triangles plus a binned-SAH BVH. Nearest-hit queries return exactly what a
// linear scan returns: smallest t, ties resolved to the lowest index.
class TriangleSet {
 public:
  TriangleSet() = default;
  explicit TriangleSet(std::vector<Triangle> triangles);

  const std::vector<Triangle>& triangles() const { return triangles_; }
  size_t size() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }
  const Triangle& operator[](size_t i) const { return triangles_[i]; }
  const Bounds3& bounds() const { return bounds_; }

  std::optional<TriangleHit> intersect(const Ray& ray, double t_max) const;
  bool occluded(const Ray& ray, double t_max) const;

  // Reference path: tests every triangle.
  std::optional<TriangleHit> intersect_linear(const Ray& ray, double t_max) const;

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Bounds3 box;
    uint32_t first = 0;  // leaf: first primitive in order_; inner: right child
    uint16_t count = 0;  // 0 for inner nodes
    uint8_t axis = 0;
  };

  uint32_t build(uint32_t begin, uint32_t end, std::vector<Bounds3>& boxes,
                 std::vector<Vec3>& centroids);
  template <bool AnyHit>
  std::optional<TriangleHit> traverse(const Ray& ray, double t_max) const;

  std::vector<Triangle> triangles_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
  Bounds3 bounds_;
};

}  // namespace niv
