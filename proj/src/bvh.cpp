#include "niv/bvh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace niv {

Vec3 Triangle::shading_normal(double b1, double b2) const {
  Vec3 n = normalize(n0 * (1 - b1 - b2) + n1 * b1 + n2 * b2);
  if (!(length(n) > 0.5)) return ng;
  if (dot(n, ng) < 0) n = -n;
  return n;
}

// Barycentric slack so rays through a shared edge can't slip between the two
// triangles on rounding.
constexpr double kEdgeSlack = 1e-9;

std::optional<TriangleHit> intersect_triangle(const Triangle& tri, const Ray& ray, double t_max) {
  const Vec3 e1 = tri.p1 - tri.p0;
  const Vec3 e2 = tri.p2 - tri.p0;
  const Vec3 pv = cross(ray.dir, e2);
  const double det = dot(e1, pv);
  if (det == 0 || !std::isfinite(det)) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 tv = ray.origin - tri.p0;
  const double b1 = dot(tv, pv) * inv_det;
  if (b1 < -kEdgeSlack || b1 > 1 + kEdgeSlack) return std::nullopt;
  const Vec3 qv = cross(tv, e1);
  const double b2 = dot(ray.dir, qv) * inv_det;
  if (b2 < -kEdgeSlack || b1 + b2 > 1 + kEdgeSlack) return std::nullopt;
  const double t = dot(e2, qv) * inv_det;
  if (!(t > 0) || !(t < t_max)) return std::nullopt;
  return TriangleHit{t, b1, b2, 0};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kBins = 12;
constexpr uint32_t kLeafSize = 4;

// Entry distance of the ray into the box, or +inf on a miss.
inline double box_entry(const Bounds3& b, const Vec3& o, const Vec3& inv, const Vec3& d,
                        double t_max) {
  double t0 = 0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return kInf;
      continue;
    }
    double tn = (b.lo[a] - o[a]) * inv[a];
    double tf = (b.hi[a] - o[a]) * inv[a];
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return kInf;
  }
  return t0;
}

}  // namespace

TriangleSet::TriangleSet(std::vector<Triangle> triangles) : triangles_(std::move(triangles)) {
  const auto n = static_cast<uint32_t>(triangles_.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0u);
  if (n == 0) return;
  std::vector<Bounds3> boxes(n);
  std::vector<Vec3> centroids(n);
  for (uint32_t i = 0; i < n; ++i) {
    boxes[i] = triangles_[i].bounds();
    centroids[i] = boxes[i].center();
    bounds_.expand(boxes[i]);
  }
  nodes_.reserve(2 * n);
  build(0, n, boxes, centroids);
  // Pad node boxes so rounding in the slab test can never cull a true hit.
  for (auto& node : nodes_) {
    const double scale = std::max({1.0, std::abs(node.box.lo.x), std::abs(node.box.lo.y),
                                   std::abs(node.box.lo.z), std::abs(node.box.hi.x),
                                   std::abs(node.box.hi.y), std::abs(node.box.hi.z)});
    const double pad = 1e-9 * scale;
    node.box.lo -= Vec3(pad, pad, pad);
    node.box.hi += Vec3(pad, pad, pad);
  }
}

uint32_t TriangleSet::build(uint32_t begin, uint32_t end, std::vector<Bounds3>& boxes,
                            std::vector<Vec3>& centroids) {
  const auto index = static_cast<uint32_t>(nodes_.size());
  nodes_.push_back({});
  Bounds3 box, cbox;
  for (uint32_t i = begin; i < end; ++i) {
    box.expand(boxes[order_[i]]);
    cbox.expand(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  const uint32_t count = end - begin;
  const int axis = cbox.largest_axis();
  const double lo = cbox.lo[axis];
  const double span = cbox.hi[axis] - lo;
  if (count <= kLeafSize || !(span > 0)) {
    if (count <= 0xffff) {
      nodes_[index].first = begin;
      nodes_[index].count = static_cast<uint16_t>(count);
      return index;
    }
  }

  uint32_t mid = begin + count / 2;
  if (span > 0) {
    std::array<Bounds3, kBins> bin_box;
    std::array<uint32_t, kBins> bin_count{};
    auto bin_of = [&](uint32_t prim) {
      const int b = static_cast<int>(kBins * (centroids[prim][axis] - lo) / span);
      return std::clamp(b, 0, kBins - 1);
    };
    for (uint32_t i = begin; i < end; ++i) {
      const int b = bin_of(order_[i]);
      bin_count[b]++;
      bin_box[b].expand(boxes[order_[i]]);
    }
    double best_cost = std::numeric_limits<double>::infinity();
    int best_split = -1;
    for (int s = 0; s < kBins - 1; ++s) {
      Bounds3 l, r;
      uint32_t nl = 0, nr = 0;
      for (int b = 0; b <= s; ++b) { l.expand(bin_box[b]); nl += bin_count[b]; }
      for (int b = s + 1; b < kBins; ++b) { r.expand(bin_box[b]); nr += bin_count[b]; }
      if (nl == 0 || nr == 0) continue;
      const double cost = nl * l.surface_area() + nr * r.surface_area();
      if (cost < best_cost) { best_cost = cost; best_split = s; }
    }
    if (best_split >= 0) {
      auto it = std::stable_partition(order_.begin() + begin, order_.begin() + end,
                                      [&](uint32_t p) { return bin_of(p) <= best_split; });
      mid = static_cast<uint32_t>(it - order_.begin());
    }
  }
  if (mid == begin || mid == end) {
    std::stable_sort(order_.begin() + begin, order_.begin() + end, [&](uint32_t a, uint32_t b) {
      return centroids[a][axis] < centroids[b][axis];
    });
    mid = begin + count / 2;
  }
  build(begin, mid, boxes, centroids);
  const uint32_t right = build(mid, end, boxes, centroids);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  nodes_[index].axis = static_cast<uint8_t>(axis);
  return index;
}

template <bool AnyHit>
std::optional<TriangleHit> TriangleSet::traverse(const Ray& ray, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
  std::optional<TriangleHit> best;
  double best_t = t_max;
  // Ties at equal t must be visited, so the box limit is inclusive of best_t.
  std::array<uint32_t, 128> stack;
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    const double limit = best ? best_t : t_max;
    if (box_entry(node.box, ray.origin, inv, ray.dir, limit) > limit) continue;
    if (node.count > 0) {
      for (uint32_t i = node.first; i < node.first + node.count; ++i) {
        const uint32_t prim = order_[i];
        const double tri_limit = best ? std::nextafter(best_t, kInf) : t_max;
        auto hit = intersect_triangle(triangles_[prim], ray, tri_limit);
        if (!hit) continue;
        if (!best || hit->t < best_t || (hit->t == best_t && prim < best->index)) {
          hit->index = prim;
          best = hit;
          best_t = hit->t;
          if constexpr (AnyHit) return best;
        }
      }
    } else {
      const uint32_t left = static_cast<uint32_t>(&node - nodes_.data()) + 1;
      const uint32_t right = node.first;
      // Push the far child first so the near child is popped next.
      if (ray.dir[node.axis] > 0) {
        stack[top++] = right;
        stack[top++] = left;
      } else {
        stack[top++] = left;
        stack[top++] = right;
      }
    }
  }
  return best;
}

std::optional<TriangleHit> TriangleSet::intersect(const Ray& ray, double t_max) const {
  return traverse<false>(ray, t_max);
}

bool TriangleSet::occluded(const Ray& ray, double t_max) const {
  return traverse<true>(ray, t_max).has_value();
}

std::optional<TriangleHit> TriangleSet::intersect_linear(const Ray& ray, double t_max) const {
  std::optional<TriangleHit> best;
  double best_t = t_max;
  for (uint32_t i = 0; i < triangles_.size(); ++i) {
    auto hit = intersect_triangle(triangles_[i], ray, best_t);
    if (hit) {
      hit->index = i;
      best = hit;
      best_t = hit->t;
    }
  }
  return best;
}

}  // namespace niv
