#pragma once

#include "niv/math.hpp"

namespace niv {

// Cosine-weighted direction around n, pdf = cos(theta) / pi. Polar mapping:
// u = (0, *) lands exactly on n.
inline Vec3 cosine_sample_hemisphere(const Vec3& n, double u1, double u2) {
  const double r = std::sqrt(u1);
  const double phi = 2 * kPi * u2;
  const double z = std::sqrt(std::max(0.0, 1 - u1));
  return Frame(n).to_world({r * std::cos(phi), r * std::sin(phi), z});
}

inline double cosine_hemisphere_pdf(double cos_theta) {
  return cos_theta > 0 ? cos_theta * kInvPi : 0.0;
}

inline Vec3 uniform_sample_sphere(double u1, double u2) {
  const double z = 1 - 2 * u1;
  const double r = std::sqrt(std::max(0.0, 1 - z * z));
  const double phi = 2 * kPi * u2;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline constexpr double uniform_sphere_pdf() { return 1.0 / (4 * kPi); }

// Barycentrics (b1, b2) uniformly distributed over a triangle.
inline std::array<double, 2> uniform_sample_triangle(double u1, double u2) {
  const double su = std::sqrt(u1);
  return {1 - su, u2 * su};
}

}  // namespace niv
