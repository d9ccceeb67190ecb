#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "axtrace/geometry.hpp"
#include "axtrace/volume.hpp"

namespace axtrace {

/// A supervoxel standing in for a short, roughly straight piece of neurite.
struct Fragment {
  std::uint32_t id = 0;              // 1-based; 0 is background in label volumes
  std::vector<VoxelIndex> voxels;    // sorted lexicographically
  VoxelIndex center;                 // covering-ball centre that generated it
  Vec3 x0, x1;                       // endpoints, um
  Vec3 tau0, tau1;                   // unit tangents, tau1 == -tau0
};

struct FragmentSet {
  Dims dims;
  Spacing spacing;
  std::vector<Fragment> fragments;   // fragments[n].id == n + 1

  const Fragment& by_id(std::uint32_t id) const;
};

struct Components {
  LabelVolume labels;   // 0 = background, 1..count
  std::uint32_t count = 0;
};

/// 26-connected labelling; labels follow first appearance in x-fastest scan order.
Components connected_components(const BinaryMask& mask);

/// Voxels of each component, index 0 holding label 1.
std::vector<std::vector<VoxelIndex>> component_voxels(const Components& components);

struct FragmentCell {
  VoxelIndex center;
  std::vector<VoxelIndex> voxels;
};

/// Greedy ball covering followed by nearest-centre partition. Cells that the
/// partition leaves disconnected are split into their 26-connected pieces, each
/// keeping the generating centre.
std::vector<FragmentCell> split_component(std::span<const VoxelIndex> component,
                                          const ProbabilityMap& prob, double radius_um = 7.0);

/// Throws std::invalid_argument for fewer than two voxels.
std::pair<Vec3, Vec3> estimate_endpoints(std::span<const VoxelIndex> voxels, const Spacing& spacing);

/// Throws std::invalid_argument when the endpoints coincide.
std::pair<Vec3, Vec3> estimate_tangents(const Vec3& x0, const Vec3& x1);

/// Voxel line from a to b inclusive, one sample per step of the driving axis.
std::vector<VoxelIndex> bresenham3d(const VoxelIndex& a, const VoxelIndex& b);

struct FragmentOptions {
  double threshold = 0.9;
  std::size_t min_voxels = 5;
  double radius_um = 7.0;
};

FragmentSet generate_fragments(const ProbabilityMap& prob, const FragmentOptions& options = {});

LabelVolume fragment_label_volume(const FragmentSet& set);

/// Writes `<stem>.json` (fragment table) and `<stem>_labels.json/.raw`.
void save_fragments(const FragmentSet& set, const std::filesystem::path& stem);
FragmentSet load_fragments(const std::filesystem::path& stem);

}  // namespace axtrace
