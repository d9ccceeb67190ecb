#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "axtrace/appearance.hpp"
#include "axtrace/fragments.hpp"
#include "axtrace/hmm_graph.hpp"
#include "axtrace/solver.hpp"
#include "axtrace/volume.hpp"

namespace axtrace {

struct PipelineConfig {
  std::filesystem::path volume;
  std::filesystem::path prob_map;
  std::filesystem::path labels;
  std::filesystem::path out_dir = "out";
  Hyperparams hyper;
  double threshold = 0.9;
  std::size_t min_voxels = 5;
  double step_um = 1.0;
  double swc_radius_um = 1.0;
  std::uint64_t seed = 0;
};

/// Relative paths are resolved against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

std::filesystem::path model_path(const PipelineConfig& c);
std::filesystem::path fragments_stem(const PipelineConfig& c);

/// Fits the appearance model from the label sidecar and writes model.json.
IntensityModel run_kde(const PipelineConfig& c);
/// Builds fragments from the probability map and writes them to out_dir.
FragmentSet run_fragments(const PipelineConfig& c);

struct TraceRequest {
  std::uint32_t start_fragment = 0;
  Orientation start_orientation = Orientation::forward;
  std::uint32_t end_fragment = 0;
  Orientation end_orientation = Orientation::forward;
};

class UnknownFragment : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Volume, fragments, appearance model and graph for one processed subvolume.
/// Immutable once loaded.
class Session {
 public:
  /// Loads the volume and the fragments written by run_fragments. The model
  /// comes from model.json when present, otherwise it is fitted from labels.
  static Session load(const PipelineConfig& config);
  static Session from_parts(Volume volume, FragmentSet fragments, IntensityModel model, Hyperparams hyper);

  const Volume& volume() const { return volume_; }
  const FragmentSet& fragments() const { return fragments_; }
  const LabelVolume& fragment_labels() const { return labels_; }
  const IntensityModel& model() const { return model_; }
  const TransitionGraph& graph() const { return graph_; }
  const Hyperparams& hyper() const { return hyper_; }

  /// Throws UnknownFragment for ids outside 1..N. Empty when unreachable.
  std::optional<TracePath> trace(const TraceRequest& request) const;

  /// Fragment id whose voxel set is nearest to `point_um`.
  std::uint32_t nearest_fragment(const Vec3& point_um) const;

 private:
  Volume volume_;
  FragmentSet fragments_;
  LabelVolume labels_;
  IntensityModel model_;
  Hyperparams hyper_;
  TransitionGraph graph_;
};

}  // namespace axtrace
