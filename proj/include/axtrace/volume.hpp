#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "axtrace/error.hpp"
#include "axtrace/geometry.hpp"

namespace axtrace {

/// Dense 3D grid in x-fastest layout: voxel (i,j,k) lives at i + nx*(j + ny*k).
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing) {
    validate_shape(dims, spacing);
    data_.assign(static_cast<std::size_t>(dims.count()), fill);
  }
  Grid(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate_shape(dims, spacing);
    if (static_cast<std::int64_t>(data_.size()) != dims.count()) {
      throw FormatError("grid payload has " + std::to_string(data_.size()) +
                        " samples, dims require " + std::to_string(dims.count()));
    }
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  std::size_t linear(const VoxelIndex& v) const {
    return static_cast<std::size_t>(v.i + dims_.nx * (v.j + dims_.ny * v.k));
  }
  VoxelIndex unravel(std::size_t offset) const {
    const auto o = static_cast<std::int64_t>(offset);
    return {o % dims_.nx, (o / dims_.nx) % dims_.ny, o / (dims_.nx * dims_.ny)};
  }
  bool contains(const VoxelIndex& v) const { return dims_.contains(v); }

  const T& operator[](const VoxelIndex& v) const { return data_[linear(v)]; }
  T& operator[](const VoxelIndex& v) { return data_[linear(v)]; }

  /// Bounds-checked access.
  const T& at(const VoxelIndex& v) const {
    if (!contains(v)) throw std::out_of_range("voxel index outside grid");
    return data_[linear(v)];
  }
  T& at(const VoxelIndex& v) {
    if (!contains(v)) throw std::out_of_range("voxel index outside grid");
    return data_[linear(v)];
  }

  bool operator==(const Grid&) const = default;

 private:
  static void validate_shape(const Dims& d, const Spacing& s) {
    if (d.nx < 1 || d.ny < 1 || d.nz < 1) throw FormatError("grid dims must be >= 1");
    if (!(s.sx > 0.0) || !(s.sy > 0.0) || !(s.sz > 0.0)) {
      throw FormatError("grid spacing must be positive");
    }
  }

  Dims dims_{};
  Spacing spacing_{};
  std::vector<T> data_;
};

using Volume = Grid<std::uint16_t>;
using ProbabilityMap = Grid<float>;
using BinaryMask = Grid<std::uint8_t>;
using LabelVolume = Grid<std::uint32_t>;

enum class Axis { x = 0, y = 1, z = 2 };

Axis parse_axis(std::string_view name);
std::string_view axis_name(Axis axis);

/// 2D image produced by projecting a grid; `width` runs along the faster
/// remaining axis.
template <typename T>
struct Image2D {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<T> pixels;  // row-major, u fastest

  const T& at(std::int64_t u, std::int64_t v) const {
    return pixels[static_cast<std::size_t>(u + width * v)];
  }
};

/// Maps a voxel index to the (u, v) pixel of a projection along `axis`.
/// z -> (i, j), y -> (i, k), x -> (j, k).
std::pair<std::int64_t, std::int64_t> project_index(const VoxelIndex& v, Axis axis);
std::pair<std::int64_t, std::int64_t> projected_extent(const Dims& d, Axis axis);

// ---- container I/O -------------------------------------------------------

/// Loads `<stem>.json` + `<stem>.raw`. `path` may name either file or the stem.
Volume load_volume(const std::filesystem::path& path);
ProbabilityMap load_probability_map(const std::filesystem::path& path);
LabelVolume load_label_volume(const std::filesystem::path& path);

void save_volume(const Volume& v, const std::filesystem::path& path);
void save_probability_map(const ProbabilityMap& p, const std::filesystem::path& path);
void save_label_volume(const LabelVolume& l, const std::filesystem::path& path);

std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

// ---- operations ------------------------------------------------------------

/// Voxel-centre convention, origin at index (0,0,0).
Vec3 voxel_to_physical(const VoxelIndex& index, const Spacing& spacing);
/// Bounds-checked variant.
Vec3 voxel_to_physical(const VoxelIndex& index, const Dims& dims, const Spacing& spacing);
/// Nearest voxel to a physical point (no bounds check).
VoxelIndex physical_to_voxel(const Vec3& p, const Spacing& spacing);

/// Mask true exactly where map >= t. Throws std::invalid_argument for t outside [0,1].
BinaryMask threshold_probability(const ProbabilityMap& map, double t);

Image2D<std::uint16_t> mip(const Volume& volume, Axis axis);

}  // namespace axtrace
