#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>

namespace axtrace {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr double norm_sq() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_sq()); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }
inline constexpr double dot(const Vec3& a, const Vec3& b) { return a.dot(b); }

/// Voxel lattice index. Ordered lexicographically by (i, j, k).
struct VoxelIndex {
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t k = 0;

  constexpr auto operator<=>(const VoxelIndex&) const = default;
};

struct Dims {
  std::int64_t nx = 1;
  std::int64_t ny = 1;
  std::int64_t nz = 1;

  constexpr std::int64_t count() const { return nx * ny * nz; }
  constexpr bool contains(const VoxelIndex& v) const {
    return v.i >= 0 && v.j >= 0 && v.k >= 0 && v.i < nx && v.j < ny && v.k < nz;
  }
  constexpr bool operator==(const Dims&) const = default;
};

/// Physical voxel size in micrometres.
struct Spacing {
  double sx = 0.3;
  double sy = 0.3;
  double sz = 1.0;

  constexpr bool operator==(const Spacing&) const = default;
};

}  // namespace axtrace
