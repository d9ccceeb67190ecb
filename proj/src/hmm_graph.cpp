#include "axtrace/hmm_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "axtrace/error.hpp"

namespace axtrace {

using nlohmann::json;

namespace {

constexpr double kDegenerateGap = 1e-6;

double angle_deg(double cosine) {
  return std::acos(std::clamp(cosine, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

// Uniform hash grid over tail points, cell edge = d_max.
class TailIndex {
 public:
  TailIndex(std::span<const State> states, double cell) : states_(states), cell_(cell) {
    for (const auto& s : states) cells_[key(cell_of(s.x0))].push_back(s.id);
  }

  std::vector<StateId> near(const Vec3& p, double radius) const {
    std::vector<StateId> out;
    const auto c = cell_of(p);
    const double r2 = radius * radius;
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (StateId id : it->second) {
            if ((states_[id].x0 - p).norm_sq() <= r2) out.push_back(id);
          }
        }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  using Cell = std::array<std::int64_t, 3>;
  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / cell_)),
            static_cast<std::int64_t>(std::floor(p.y / cell_)),
            static_cast<std::int64_t>(std::floor(p.z / cell_))};
  }
  static std::uint64_t key(const Cell& c) {
    // 21 bits per axis is ample for volumes measured in cells of >= 1 um.
    auto part = [](std::int64_t v) { return static_cast<std::uint64_t>(v + (1 << 20)) & 0x1FFFFF; };
    return part(c[0]) | (part(c[1]) << 21) | (part(c[2]) << 42);
  }

  std::span<const State> states_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<StateId>> cells_;
};

}  // namespace

Orientation parse_orientation(std::string_view name) {
  if (name == "forward") return Orientation::forward;
  if (name == "reversed") return Orientation::reversed;
  throw std::invalid_argument("orientation must be 'forward' or 'reversed'");
}

std::string_view orientation_name(Orientation o) {
  return o == Orientation::forward ? "forward" : "reversed";
}

State flip(const State& s) {
  State r = s;
  r.orientation = s.orientation == Orientation::forward ? Orientation::reversed : Orientation::forward;
  r.id = state_id_for(s.fragment_index, r.orientation);
  r.x0 = s.x1;
  r.x1 = s.x0;
  // Keep the tail tangent pointing out of the tail, as estimate_tangents does.
  r.tau0 = s.tau1;
  r.tau1 = s.tau0;
  return r;
}

std::vector<State> make_states(const FragmentSet& fragments) {
  std::vector<State> states;
  states.reserve(2 * fragments.fragments.size());
  for (std::uint32_t n = 0; n < fragments.fragments.size(); ++n) {
    const auto& f = fragments.fragments[n];
    State fwd{state_id_for(n, Orientation::forward), n, Orientation::forward, f.x0, f.x1, f.tau0, f.tau1};
    states.push_back(fwd);
    states.push_back(flip(fwd));
  }
  return states;
}

void Hyperparams::validate() const {
  if (!(alpha_d >= 0.0) || !(alpha_kappa >= 0.0)) throw std::invalid_argument("alpha_d and alpha_kappa must be >= 0");
  if (!(d_max_um > 0.0)) throw std::invalid_argument("d_max_um must be > 0");
  if (!(theta_max_deg > 0.0 && theta_max_deg <= 180.0)) {
    throw std::invalid_argument("theta_max_deg must lie in (0, 180]");
  }
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams h;
  try {
    h.alpha_d = j.value("alpha_d", h.alpha_d);
    h.alpha_kappa = j.value("alpha_kappa", h.alpha_kappa);
    h.d_max_um = j.value("d_max_um", h.d_max_um);
    h.theta_max_deg = j.value("theta_max_deg", h.theta_max_deg);
    h.prune_successor_angle = j.value("prune_successor_angle", h.prune_successor_angle);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed hyperparameters: ") + e.what());
  }
  h.validate();
  return h;
}

json hyperparams_to_json(const Hyperparams& h) {
  return {{"alpha_d", h.alpha_d},
          {"alpha_kappa", h.alpha_kappa},
          {"d_max_um", h.d_max_um},
          {"theta_max_deg", h.theta_max_deg},
          {"prune_successor_angle", h.prune_successor_angle}};
}

Vec3 connecting_tangent(const State& prev, const State& next) {
  const Vec3 gap = next.x0 - prev.x1;
  const double len = gap.norm();
  if (len < kDegenerateGap) return prev.tau1;
  return gap / len;
}

double curvature_sq(const State& prev, const State& next) {
  const Vec3 tc = connecting_tangent(prev, next);
  const double k1 = 1.0 - prev.tau1.dot(tc);
  const double k2 = 1.0 - tc.dot(-next.tau0);
  return 0.5 * (k1 + k2);
}

double energy(const State& prev, const State& next, const Hyperparams& hyper) {
  return hyper.alpha_d * (next.x0 - prev.x1).norm_sq() + hyper.alpha_kappa * curvature_sq(prev, next);
}

double bend_angle_deg(const State& prev, const State& next) {
  return angle_deg(prev.tau1.dot(connecting_tangent(prev, next)));
}

bool allowed(const State& prev, const State& next, const Hyperparams& hyper) {
  if (prev.id == next.id || prev.fragment_index == next.fragment_index) return false;
  if ((next.x0 - prev.x1).norm() > hyper.d_max_um) return false;
  if (bend_angle_deg(prev, next) > hyper.theta_max_deg) return false;
  if (hyper.prune_successor_angle &&
      angle_deg(connecting_tangent(prev, next).dot(-next.tau0)) > hyper.theta_max_deg) {
    return false;
  }
  return true;
}

std::vector<std::pair<StateId, double>> transition_log_prob(const State& prev,
                                                            std::span<const State> candidates,
                                                            const Hyperparams& hyper) {
  std::vector<std::pair<StateId, double>> out;
  for (const auto& c : candidates) {
    if (allowed(prev, c, hyper)) out.emplace_back(c.id, -energy(prev, c, hyper));
  }
  if (out.empty()) return out;
  double top = out.front().second;
  for (const auto& [id, neg_u] : out) top = std::max(top, neg_u);
  double z = 0.0;
  for (const auto& [id, neg_u] : out) z += std::exp(neg_u - top);
  const double log_z = top + std::log(z);
  for (auto& [id, neg_u] : out) neg_u = std::min(neg_u - log_z, 0.0);
  return out;
}

FragmentLikelihoods fragment_likelihoods(const FragmentSet& fragments, const IntensityModel& model,
                                         const Volume& volume) {
  FragmentLikelihoods lik;
  lik.log_alpha1.reserve(fragments.fragments.size());
  lik.log_alpha0.reserve(fragments.fragments.size());
  for (const auto& f : fragments.fragments) {
    lik.log_alpha1.push_back(log_alpha_sum(model, volume, f.voxels, IntensityClass::foreground));
    lik.log_alpha0.push_back(log_alpha_sum(model, volume, f.voxels, IntensityClass::background));
  }
  return lik;
}

const Edge* TransitionGraph::find_edge(StateId from, StateId to) const {
  if (from >= out.size()) return nullptr;
  const auto& row = out[from];
  auto it = std::lower_bound(row.begin(), row.end(), to, [](const Edge& e, StateId t) { return e.to < t; });
  return (it != row.end() && it->to == to) ? &*it : nullptr;
}

std::size_t TransitionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& row : out) n += row.size();
  return n;
}

std::vector<VoxelIndex> imputed_voxels(const State& prev, const State& next, const Volume& volume,
                                       const LabelVolume& fragment_labels) {
  const auto& sp = volume.spacing();
  const auto line = bresenham3d(physical_to_voxel(prev.x1, sp), physical_to_voxel(next.x0, sp));
  std::vector<VoxelIndex> out;
  out.reserve(line.size());
  for (const auto& v : line) {
    if (!volume.contains(v)) continue;
    const auto label = fragment_labels[v];
    if (label == prev.fragment_id() || label == next.fragment_id()) continue;
    out.push_back(v);
  }
  return out;
}

Edge make_edge(const State& prev, const State& next, double log_prior, double log_alpha1_next,
               const IntensityModel& model, const Volume& volume, const LabelVolume& fragment_labels) {
  Edge e;
  e.to = next.id;
  e.log_prior = log_prior;
  e.log_lik_fragment = log_alpha1_next;
  e.log_lik_gap = log_alpha1_sum(model, volume, imputed_voxels(prev, next, volume, fragment_labels));
  // Each term is <= 0, so the sum is clamped only against rounding.
  e.weight = std::max(0.0, -(e.log_lik_fragment + e.log_lik_gap + e.log_prior));
  return e;
}

double edge_weight(const State& prev, const State& next, std::span<const State> successors,
                   const FragmentSet& fragments, const IntensityModel& model, const Volume& volume,
                   const LabelVolume& fragment_labels, const Hyperparams& hyper) {
  if (!allowed(prev, next, hyper)) throw std::invalid_argument("edge_weight requires an allowed transition");
  const auto priors = transition_log_prob(prev, successors, hyper);
  auto it = std::find_if(priors.begin(), priors.end(), [&](const auto& p) { return p.first == next.id; });
  if (it == priors.end()) throw std::invalid_argument("successor list does not contain next state");
  const double la1 = log_alpha1_sum(model, volume, fragments.fragments.at(next.fragment_index).voxels);
  return make_edge(prev, next, it->second, la1, model, volume, fragment_labels).weight;
}

TransitionGraph build_graph(const FragmentSet& fragments, const IntensityModel& model,
                            const Volume& volume, const LabelVolume& fragment_labels,
                            const Hyperparams& hyper) {
  hyper.validate();
  if (volume.dims() != fragment_labels.dims()) throw std::invalid_argument("label volume dims differ from volume");

  TransitionGraph g;
  g.states = make_states(fragments);
  g.likelihoods = fragment_likelihoods(fragments, model, volume);
  g.out.resize(g.states.size());

  const TailIndex index(g.states, hyper.d_max_um);
  std::vector<State> candidates;
  for (const auto& prev : g.states) {
    candidates.clear();
    for (StateId id : index.near(prev.x1, hyper.d_max_um)) candidates.push_back(g.states[id]);
    auto& row = g.out[prev.id];
    for (const auto& [to, log_p] : transition_log_prob(prev, candidates, hyper)) {
      const auto& next = g.states[to];
      row.push_back(make_edge(prev, next, log_p, g.likelihoods.log_alpha1[next.fragment_index], model,
                              volume, fragment_labels));
    }
  }
  return g;
}

void export_graph_jsonl(const TransitionGraph& graph, std::ostream& out) {
  for (std::size_t from = 0; from < graph.out.size(); ++from) {
    for (const auto& e : graph.out[from]) {
      out << json{{"from", from}, {"to", e.to}, {"log_prior", e.log_prior}, {"log_lik", e.log_lik()}, {"w", e.weight}}
                 .dump()
          << '\n';
    }
  }
}

}  // namespace axtrace
