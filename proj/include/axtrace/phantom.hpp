#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"

#include "axtrace/appearance.hpp"
#include "axtrace/geometry.hpp"
#include "axtrace/solver.hpp"
#include "axtrace/volume.hpp"

namespace axtrace {

struct HelixShape {
  double center_x_um = 38.4;
  double center_y_um = 38.4;
  double radius_um = 20.0;
  double z_start_um = 20.0;
  double z_end_um = 230.0;
  double turns = 2.0;
};

/// Arc-length interval of the curve whose signal is removed.
struct CensorGap {
  double start_um = 0.0;
  double length_um = 0.0;
};

struct PhantomSpec {
  Dims dims{256, 256, 256};
  Spacing spacing{0.3, 0.3, 1.0};
  // Either a helix or an explicit polyline (um) when `polyline` is non-empty.
  HelixShape helix;
  Polyline polyline;
  double tube_radius_um = 1.0;
  double fg_mean = 140.0;
  double fg_sd = 20.0;
  double bg_mean = 100.0;
  double bg_sd = 20.0;
  std::vector<CensorGap> gaps;
  // Optional isolated straight segment, not part of the ground truth.
  std::optional<std::pair<Vec3, Vec3>> island;
  std::size_t label_samples = 3000;
  std::uint64_t seed = 1;
};

PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
nlohmann::json phantom_spec_to_json(const PhantomSpec& spec);

struct Phantom {
  Volume volume;
  ProbabilityMap probability;
  LabelSet labels;
  Polyline truth;      // full centreline including censored stretches
  Vec3 start_um;       // first and last uncensored centreline points
  Vec3 end_um;
};

/// Centreline densely sampled at `step_um`.
Polyline phantom_centerline(const PhantomSpec& spec, double step_um = 0.1);

Phantom make_phantom(const PhantomSpec& spec);

/// Writes volume, probability map, label sidecar, truth SWC, metadata and a
/// ready-to-run pipeline config into `dir`.
void write_phantom(const Phantom& phantom, const PhantomSpec& spec, const std::filesystem::path& dir);

}  // namespace axtrace
