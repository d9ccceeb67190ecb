#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "axtrace/appearance.hpp"
#include "axtrace/fragments.hpp"
#include "axtrace/geometry.hpp"
#include "axtrace/volume.hpp"

namespace axtrace {

using StateId = std::uint32_t;

enum class Orientation : std::uint8_t { forward = 0, reversed = 1 };

Orientation parse_orientation(std::string_view name);
std::string_view orientation_name(Orientation o);

/// An oriented fragment: x0 is the tail, x1 the head.
struct State {
  StateId id = 0;
  std::uint32_t fragment_index = 0;  // position in FragmentSet::fragments
  Orientation orientation = Orientation::forward;
  Vec3 x0, x1;
  Vec3 tau0, tau1;

  std::uint32_t fragment_id() const { return fragment_index + 1; }
};

/// Same fragment traversed the other way: endpoints swapped, and each tangent
/// reversed so that tau0 = (x0 - x1)/|x0 - x1| still holds.
State flip(const State& s);

constexpr StateId state_id_for(std::uint32_t fragment_index, Orientation o) {
  return 2 * fragment_index + static_cast<StateId>(o);
}

std::vector<State> make_states(const FragmentSet& fragments);

struct Hyperparams {
  double alpha_d = 10.0;          // 1/um^2
  double alpha_kappa = 1000.0;
  double d_max_um = 15.0;
  double theta_max_deg = 150.0;
  // Also prune on the bend at the successor's tail. Off by default.
  bool prune_successor_angle = false;

  void validate() const;
};

Hyperparams hyperparams_from_json(const nlohmann::json& j);
nlohmann::json hyperparams_to_json(const Hyperparams& h);

/// Unit vector from prev's head to next's tail; prev.tau1 when the gap is
/// shorter than 1e-6 um.
Vec3 connecting_tangent(const State& prev, const State& next);

/// Mean of the squared finite-difference curvatures at both ends of the gap.
double curvature_sq(const State& prev, const State& next);

double energy(const State& prev, const State& next, const Hyperparams& hyper);

/// Angle in degrees between prev.tau1 and the connecting tangent.
double bend_angle_deg(const State& prev, const State& next);

bool allowed(const State& prev, const State& next, const Hyperparams& hyper);

/// Boltzmann log-probabilities over the allowed members of `candidates`,
/// normalised over that support. Empty when nothing is allowed.
std::vector<std::pair<StateId, double>> transition_log_prob(const State& prev,
                                                            std::span<const State> candidates,
                                                            const Hyperparams& hyper);

struct Edge {
  StateId to = 0;
  double log_prior = 0.0;         // log p(next | prev) <= 0
  double log_lik_fragment = 0.0;  // log alpha_1 over the successor's voxels
  double log_lik_gap = 0.0;       // log alpha_1 over the imputed gap voxels
  double weight = 0.0;            // -(log_lik_fragment + log_lik_gap + log_prior)

  double log_lik() const { return log_lik_fragment + log_lik_gap; }
};

struct FragmentLikelihoods {
  std::vector<double> log_alpha1;  // per fragment index
  std::vector<double> log_alpha0;
};

FragmentLikelihoods fragment_likelihoods(const FragmentSet& fragments, const IntensityModel& model,
                                         const Volume& volume);

struct TransitionGraph {
  std::vector<State> states;
  std::vector<std::vector<Edge>> out;  // per state, sorted by target id
  FragmentLikelihoods likelihoods;

  const Edge* find_edge(StateId from, StateId to) const;
  std::size_t edge_count() const;
  std::uint32_t fragment_of(StateId s) const { return states.at(s).fragment_index; }
};

/// Voxels of the straight gap from prev's head to next's tail that count
/// toward the imputation term: out-of-volume voxels and voxels of either
/// endpoint fragment are dropped.
std::vector<VoxelIndex> imputed_voxels(const State& prev, const State& next, const Volume& volume,
                                       const LabelVolume& fragment_labels);

/// Edge weight for an allowed pair given the successor candidates of `prev`
/// (needed for the Boltzmann normaliser).
Edge make_edge(const State& prev, const State& next, double log_prior, double log_alpha1_next,
               const IntensityModel& model, const Volume& volume, const LabelVolume& fragment_labels);

double edge_weight(const State& prev, const State& next, std::span<const State> successors,
                   const FragmentSet& fragments, const IntensityModel& model, const Volume& volume,
                   const LabelVolume& fragment_labels, const Hyperparams& hyper);

TransitionGraph build_graph(const FragmentSet& fragments, const IntensityModel& model,
                            const Volume& volume, const LabelVolume& fragment_labels,
                            const Hyperparams& hyper);

/// One JSON object per edge and line.
void export_graph_jsonl(const TransitionGraph& graph, std::ostream& out);

}  // namespace axtrace
