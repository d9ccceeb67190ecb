#include "axtrace/pipeline.hpp"

#include <fstream>
#include <limits>

#include "axtrace/error.hpp"

namespace axtrace {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    if (j.contains("volume")) c.volume = resolve(base_dir, j["volume"].get<std::string>());
    if (j.contains("prob_map")) c.prob_map = resolve(base_dir, j["prob_map"].get<std::string>());
    if (j.contains("labels")) c.labels = resolve(base_dir, j["labels"].get<std::string>());
    c.out_dir = resolve(base_dir, j.value("out_dir", std::string("out")));
    if (j.contains("hyperparams")) c.hyper = hyperparams_from_json(j["hyperparams"]);
    c.threshold = j.value("threshold", c.threshold);
    c.min_voxels = j.value("min_voxels", c.min_voxels);
    c.step_um = j.value("step_um", c.step_um);
    c.swc_radius_um = j.value("swc_radius_um", c.swc_radius_um);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  return config_from_json(read_json(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

fs::path model_path(const PipelineConfig& c) { return c.out_dir / "model.json"; }
fs::path fragments_stem(const PipelineConfig& c) { return c.out_dir / "fragments"; }

IntensityModel run_kde(const PipelineConfig& c) {
  const auto volume = load_volume(c.volume);
  const auto labels = load_labels(c.labels);
  const auto fg = sample_intensities(volume, labels.fg);
  const auto bg = sample_intensities(volume, labels.bg);
  auto model = IntensityModel::fit(fg, bg);
  fs::create_directories(c.out_dir);
  std::ofstream out(model_path(c));
  if (!out) throw IoError("cannot write " + model_path(c).string());
  out << model_to_json(model).dump() << '\n';
  return model;
}

FragmentSet run_fragments(const PipelineConfig& c) {
  const auto prob = load_probability_map(c.prob_map);
  auto set = generate_fragments(prob, {.threshold = c.threshold, .min_voxels = c.min_voxels});
  save_fragments(set, fragments_stem(c));
  return set;
}

Session Session::load(const PipelineConfig& config) {
  auto volume = load_volume(config.volume);
  auto fragments = load_fragments(fragments_stem(config));
  if (fragments.dims != volume.dims()) throw FormatError("fragment labels do not match volume dims");
  IntensityModel model;
  if (fs::exists(model_path(config))) {
    model = model_from_json(read_json(model_path(config)));
  } else {
    const auto labels = load_labels(config.labels);
    model = IntensityModel::fit(sample_intensities(volume, labels.fg), sample_intensities(volume, labels.bg));
  }
  return from_parts(std::move(volume), std::move(fragments), std::move(model), config.hyper);
}

Session Session::from_parts(Volume volume, FragmentSet fragments, IntensityModel model, Hyperparams hyper) {
  Session s;
  s.volume_ = std::move(volume);
  s.fragments_ = std::move(fragments);
  s.labels_ = fragment_label_volume(s.fragments_);
  s.model_ = std::move(model);
  s.hyper_ = hyper;
  s.graph_ = build_graph(s.fragments_, s.model_, s.volume_, s.labels_, s.hyper_);
  return s;
}

std::optional<TracePath> Session::trace(const TraceRequest& r) const {
  const auto n = fragments_.fragments.size();
  for (auto id : {r.start_fragment, r.end_fragment}) {
    if (id == 0 || id > n) throw UnknownFragment("unknown fragment id " + std::to_string(id));
  }
  return shortest_path(graph_, state_id_for(r.start_fragment - 1, r.start_orientation),
                       state_id_for(r.end_fragment - 1, r.end_orientation));
}

std::uint32_t Session::nearest_fragment(const Vec3& point_um) const {
  if (fragments_.fragments.empty()) throw UnknownFragment("session has no fragments");
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& f : fragments_.fragments) {
    for (const auto& v : f.voxels) {
      const double d = (voxel_to_physical(v, fragments_.spacing) - point_um).norm_sq();
      if (d < best_d) {
        best_d = d;
        best = f.id;
      }
    }
  }
  return best;
}

}  // namespace axtrace
