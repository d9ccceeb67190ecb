#include "axtrace/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace axtrace {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
constexpr std::string_view dtype_name();
template <>
constexpr std::string_view dtype_name<std::uint16_t>() { return "u16"; }
template <>
constexpr std::string_view dtype_name<float>() { return "f32"; }
template <>
constexpr std::string_view dtype_name<std::uint32_t>() { return "u32"; }

fs::path stem_of(const fs::path& path) {
  auto ext = path.extension();
  if (ext == ".json" || ext == ".raw") {
    auto p = path;
    p.replace_extension();
    return p;
  }
  return path;
}

template <typename T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <typename T>
Grid<T> load_grid(const fs::path& path) {
  const auto hpath = header_path(path);
  const auto rpath = payload_path(path);

  std::ifstream hs(hpath);
  if (!hs) throw IoError("cannot open volume header " + hpath.string());
  json header;
  try {
    hs >> header;
  } catch (const json::exception& e) {
    throw FormatError("corrupt volume header " + hpath.string() + ": " + e.what());
  }

  Dims dims;
  Spacing spacing;
  std::string dtype;
  try {
    const auto& d = header.at("dims");
    const auto& s = header.at("spacing");
    if (d.size() != 3 || s.size() != 3) throw FormatError("dims and spacing need 3 entries");
    dims = {d[0].get<std::int64_t>(), d[1].get<std::int64_t>(), d[2].get<std::int64_t>()};
    spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    dtype = header.at("dtype").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("volume header " + hpath.string() + " is missing fields: " + e.what());
  }
  if (dtype != dtype_name<T>()) {
    throw FormatError("volume " + hpath.string() + " has dtype " + dtype + ", expected " +
                      std::string(dtype_name<T>()));
  }
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) throw FormatError("volume dims must be >= 1");
  if (!(spacing.sx > 0) || !(spacing.sy > 0) || !(spacing.sz > 0)) {
    throw FormatError("volume spacing must be positive");
  }

  std::ifstream rs(rpath, std::ios::binary);
  if (!rs) throw IoError("cannot open volume payload " + rpath.string());
  rs.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::int64_t>(rs.tellg());
  rs.seekg(0);
  const auto expected = dims.count() * static_cast<std::int64_t>(sizeof(T));
  if (bytes != expected) {
    throw FormatError("volume payload " + rpath.string() + " has " + std::to_string(bytes) +
                      " bytes, header requires " + std::to_string(expected));
  }
  std::vector<T> data(static_cast<std::size_t>(dims.count()));
  rs.read(reinterpret_cast<char*>(data.data()), expected);
  if (!rs) throw IoError("short read on " + rpath.string());
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : data) v = byteswap_if_big(v);
  }
  return Grid<T>(dims, spacing, std::move(data));
}

template <typename T>
void save_grid(const Grid<T>& grid, const fs::path& path) {
  const auto hpath = header_path(path);
  const auto rpath = payload_path(path);
  if (hpath.has_parent_path()) fs::create_directories(hpath.parent_path());

  const auto& d = grid.dims();
  const auto& s = grid.spacing();
  json header = {{"dims", {d.nx, d.ny, d.nz}},
                 {"spacing", {s.sx, s.sy, s.sz}},
                 {"dtype", std::string(dtype_name<T>())}};
  std::ofstream hs(hpath);
  if (!hs) throw IoError("cannot write " + hpath.string());
  hs << header.dump() << '\n';

  std::ofstream rs(rpath, std::ios::binary);
  if (!rs) throw IoError("cannot write " + rpath.string());
  auto data = grid.data();
  if constexpr (std::endian::native == std::endian::big) {
    for (auto v : data) {
      v = byteswap_if_big(v);
      rs.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
  } else {
    rs.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!rs) throw IoError("write failed on " + rpath.string());
}

}  // namespace

fs::path header_path(const fs::path& path) {
  auto p = stem_of(path);
  p += ".json";
  return p;
}

fs::path payload_path(const fs::path& path) {
  auto p = stem_of(path);
  p += ".raw";
  return p;
}

Volume load_volume(const fs::path& path) { return load_grid<std::uint16_t>(path); }

ProbabilityMap load_probability_map(const fs::path& path) {
  auto map = load_grid<float>(path);
  for (float v : map.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("probability map value outside [0,1]");
  }
  return map;
}

LabelVolume load_label_volume(const fs::path& path) { return load_grid<std::uint32_t>(path); }

void save_volume(const Volume& v, const fs::path& path) { save_grid(v, path); }
void save_probability_map(const ProbabilityMap& p, const fs::path& path) { save_grid(p, path); }
void save_label_volume(const LabelVolume& l, const fs::path& path) { save_grid(l, path); }

Axis parse_axis(std::string_view name) {
  if (name == "x") return Axis::x;
  if (name == "y") return Axis::y;
  if (name == "z") return Axis::z;
  throw std::invalid_argument("axis must be one of x, y, z");
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
  }
  return "?";
}

std::pair<std::int64_t, std::int64_t> project_index(const VoxelIndex& v, Axis axis) {
  switch (axis) {
    case Axis::x: return {v.j, v.k};
    case Axis::y: return {v.i, v.k};
    case Axis::z: return {v.i, v.j};
  }
  return {0, 0};
}

std::pair<std::int64_t, std::int64_t> projected_extent(const Dims& d, Axis axis) {
  return project_index({d.nx, d.ny, d.nz}, axis);
}

Vec3 voxel_to_physical(const VoxelIndex& index, const Spacing& spacing) {
  return {static_cast<double>(index.i) * spacing.sx, static_cast<double>(index.j) * spacing.sy,
          static_cast<double>(index.k) * spacing.sz};
}

Vec3 voxel_to_physical(const VoxelIndex& index, const Dims& dims, const Spacing& spacing) {
  if (!dims.contains(index)) throw std::out_of_range("voxel index outside volume");
  return voxel_to_physical(index, spacing);
}

VoxelIndex physical_to_voxel(const Vec3& p, const Spacing& spacing) {
  return {static_cast<std::int64_t>(std::llround(p.x / spacing.sx)),
          static_cast<std::int64_t>(std::llround(p.y / spacing.sy)),
          static_cast<std::int64_t>(std::llround(p.z / spacing.sz))};
}

BinaryMask threshold_probability(const ProbabilityMap& map, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("threshold must lie in [0,1]");
  BinaryMask mask(map.dims(), map.spacing(), 0);
  // Compared in the map's own precision so a stored 0.9f passes t = 0.9.
  const auto tf = static_cast<float>(t);
  auto src = map.data();
  auto dst = mask.data();
  for (std::size_t n = 0; n < src.size(); ++n) dst[n] = src[n] >= tf ? 1 : 0;
  return mask;
}

Image2D<std::uint16_t> mip(const Volume& volume, Axis axis) {
  const auto& d = volume.dims();
  const auto [w, h] = projected_extent(d, axis);
  Image2D<std::uint16_t> out{w, h, std::vector<std::uint16_t>(static_cast<std::size_t>(w * h), 0)};
  for (std::int64_t k = 0; k < d.nz; ++k) {
    for (std::int64_t j = 0; j < d.ny; ++j) {
      for (std::int64_t i = 0; i < d.nx; ++i) {
        const VoxelIndex v{i, j, k};
        const auto [u, vv] = project_index(v, axis);
        auto& px = out.pixels[static_cast<std::size_t>(u + w * vv)];
        px = std::max(px, volume[v]);
      }
    }
  }
  return out;
}

}  // namespace axtrace
