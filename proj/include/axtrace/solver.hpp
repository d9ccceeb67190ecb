#pragma once

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "axtrace/geometry.hpp"
#include "axtrace/hmm_graph.hpp"
#include "axtrace/term_table.hpp"

namespace axtrace {

using Polyline = std::vector<Vec3>;

/// Most-probable path between fixed start and end states. `log_prob` omits
/// the constant initial term p(s_1, I_{F_1}).
struct TracePath {
  std::vector<StateId> states;
  double total_weight = 0.0;
  double log_prob = 0.0;
  Polyline polyline;
};

enum class Algorithm { dijkstra, bellman_ford };

struct SolverOptions {
  Algorithm algorithm = Algorithm::dijkstra;
};

/// Minimum-weight path, ties to the lexicographically smaller state
/// sequence. Empty when `end` is unreachable. Throws IntegrityError if
/// Dijkstra meets a negative weight, or Bellman-Ford a negative cycle.
std::optional<TracePath> shortest_path(const TransitionGraph& graph, StateId start, StateId end,
                                       const SolverOptions& options = {});

/// History-aware log path probability: successor fragment likelihood only on
/// a fragment's first visit, gap likelihood and transition prior every step.
/// Throws std::invalid_argument when a consecutive pair has no edge.
double path_log_prob(std::span<const StateId> sequence, const TransitionGraph& graph);

/// Full-image joint log-probability using the alpha_1/alpha_0 ratio, again
/// without the initial term. For analysis only; it can reward cycles.
double joint_log_prob_full(std::span<const StateId> sequence, const TransitionGraph& graph,
                           const FragmentLikelihoods& likelihoods);

/// The single-step factor relating joint_log_prob_full of `prefix + next`
/// to that of `prefix`.
double joint_log_increment(std::span<const StateId> prefix, StateId next, const TransitionGraph& graph,
                           const FragmentLikelihoods& likelihoods);

/// Term table (log domain) mirroring path_log_prob on `graph`.
TermTable<LogProb> term_table(const TransitionGraph& graph);

struct BruteForceResult {
  std::vector<StateId> states;
  double log_prob = 0.0;
};

std::optional<BruteForceResult> brute_force_best(const TransitionGraph& graph, StateId start, StateId end,
                                                 std::size_t n_max);

/// [s1.x0, s1.x1, s2.x0, s2.x1, ...] with consecutive duplicates merged.
Polyline sequence_to_polyline(std::span<const StateId> sequence, std::span<const State> states);

nlohmann::json trace_to_json(const TracePath& path);

}  // namespace axtrace
