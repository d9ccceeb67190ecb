#include "axtrace/solver.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

#include "axtrace/error.hpp"

namespace axtrace {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr StateId kNone = std::numeric_limits<StateId>::max();

std::vector<StateId> unwind(const std::vector<StateId>& pred, StateId end) {
  std::vector<StateId> seq;
  for (StateId s = end; s != kNone; s = pred[s]) seq.push_back(s);
  std::reverse(seq.begin(), seq.end());
  return seq;
}

void check_ids(const TransitionGraph& graph, StateId start, StateId end) {
  if (start >= graph.states.size() || end >= graph.states.size()) {
    throw std::out_of_range("state id outside graph");
  }
}

std::optional<std::vector<StateId>> dijkstra(const TransitionGraph& graph, StateId start, StateId end) {
  const auto n = graph.states.size();
  std::vector<double> dist(n, kInf);
  std::vector<StateId> pred(n, kNone);
  std::vector<bool> settled(n, false);
  using Item = std::pair<double, StateId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[start] = 0.0;
  queue.emplace(0.0, start);

  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (settled[u] || d > dist[u]) continue;
    settled[u] = true;
    if (u == end) break;
    for (const auto& e : graph.out[u]) {
      if (e.weight < 0.0) {
        throw IntegrityError("negative edge weight " + std::to_string(e.weight) + " on " + std::to_string(u) +
                             "->" + std::to_string(e.to));
      }
      if (settled[e.to]) continue;
      const double nd = d + e.weight;
      if (nd < dist[e.to]) {
        dist[e.to] = nd;
        pred[e.to] = u;
        queue.emplace(nd, e.to);
      } else if (nd == dist[e.to] && pred[e.to] != u) {
        auto via_u = unwind(pred, u);
        via_u.push_back(e.to);
        if (via_u < unwind(pred, e.to)) pred[e.to] = u;
      }
    }
  }
  if (!settled[end]) return std::nullopt;
  return unwind(pred, end);
}

std::optional<std::vector<StateId>> bellman_ford(const TransitionGraph& graph, StateId start, StateId end) {
  const auto n = graph.states.size();
  std::vector<double> dist(n, kInf);
  std::vector<StateId> pred(n, kNone);
  dist[start] = 0.0;
  for (std::size_t round = 0; round < n; ++round) {
    bool changed = false;
    for (StateId u = 0; u < n; ++u) {
      if (dist[u] == kInf) continue;
      for (const auto& e : graph.out[u]) {
        if (dist[u] + e.weight < dist[e.to]) {
          dist[e.to] = dist[u] + e.weight;
          pred[e.to] = u;
          changed = true;
        }
      }
    }
    if (!changed) break;
    if (round + 1 == n) throw IntegrityError("negative cycle reachable from start state");
  }
  if (dist[end] == kInf) return std::nullopt;
  return unwind(pred, end);
}

}  // namespace

std::optional<TracePath> shortest_path(const TransitionGraph& graph, StateId start, StateId end,
                                       const SolverOptions& options) {
  check_ids(graph, start, end);
  auto seq = options.algorithm == Algorithm::dijkstra ? dijkstra(graph, start, end)
                                                      : bellman_ford(graph, start, end);
  if (!seq) return std::nullopt;

  TracePath path;
  path.states = std::move(*seq);
  for (std::size_t i = 1; i < path.states.size(); ++i) {
    path.total_weight += graph.find_edge(path.states[i - 1], path.states[i])->weight;
  }
  path.log_prob = path_log_prob(path.states, graph);
  path.polyline = sequence_to_polyline(path.states, graph.states);
  return path;
}

double path_log_prob(std::span<const StateId> sequence, const TransitionGraph& graph) {
  if (sequence.empty()) throw std::invalid_argument("empty sequence");
  std::uint32_t n_frag = 0;
  for (const auto& s : graph.states) n_frag = std::max(n_frag, s.fragment_index + 1);
  std::vector<bool> seen(n_frag, false);
  seen[graph.fragment_of(sequence[0])] = true;
  double total = 0.0;
  for (std::size_t i = 1; i < sequence.size(); ++i) {
    const Edge* e = graph.find_edge(sequence[i - 1], sequence[i]);
    if (!e) {
      throw std::invalid_argument("no transition " + std::to_string(sequence[i - 1]) + "->" +
                                  std::to_string(sequence[i]));
    }
    const auto frag = graph.fragment_of(sequence[i]);
    if (!seen[frag]) total += e->log_lik_fragment;
    seen[frag] = true;
    total += e->log_lik_gap + e->log_prior;
  }
  return total;
}

double joint_log_increment(std::span<const StateId> prefix, StateId next, const TransitionGraph& graph,
                           const FragmentLikelihoods& likelihoods) {
  if (prefix.empty()) throw std::invalid_argument("empty prefix");
  const Edge* e = graph.find_edge(prefix.back(), next);
  if (!e) throw std::invalid_argument("no transition " + std::to_string(prefix.back()) + "->" + std::to_string(next));
  const auto frag = graph.fragment_of(next);
  const bool fresh = std::none_of(prefix.begin(), prefix.end(), [&](StateId s) { return graph.fragment_of(s) == frag; });
  double inc = e->log_prior;
  if (fresh) inc += likelihoods.log_alpha1.at(frag) - likelihoods.log_alpha0.at(frag);
  return inc;
}

double joint_log_prob_full(std::span<const StateId> sequence, const TransitionGraph& graph,
                           const FragmentLikelihoods& likelihoods) {
  if (sequence.empty()) throw std::invalid_argument("empty sequence");
  // Direct product form: each fragment's ratio enters once, at its first visit.
  std::vector<std::uint32_t> visited{graph.fragment_of(sequence[0])};
  double total = 0.0;
  for (std::size_t i = 1; i < sequence.size(); ++i) {
    const Edge* e = graph.find_edge(sequence[i - 1], sequence[i]);
    if (!e) throw std::invalid_argument("no transition in sequence");
    const auto frag = graph.fragment_of(sequence[i]);
    const bool fresh = std::find(visited.begin(), visited.end(), frag) == visited.end();
    const double ratio = fresh ? likelihoods.log_alpha1.at(frag) - likelihoods.log_alpha0.at(frag) : 0.0;
    total += ratio + e->log_prior;
    if (fresh) visited.push_back(frag);
  }
  return total;
}

TermTable<LogProb> term_table(const TransitionGraph& graph) {
  TermTable<LogProb> table(graph.states.size());
  for (const auto& s : graph.states) table.fragment_of[s.id] = s.fragment_index;
  for (StateId from = 0; from < graph.out.size(); ++from) {
    for (const auto& e : graph.out[from]) {
      table.set(from, e.to, LogProb{e.log_lik_fragment + e.log_lik_gap + e.log_prior},
                LogProb{e.log_lik_gap + e.log_prior});
    }
  }
  return table;
}

std::optional<BruteForceResult> brute_force_best(const TransitionGraph& graph, StateId start, StateId end,
                                                 std::size_t n_max) {
  check_ids(graph, start, end);
  const auto best = brute_force_best(term_table(graph), start, end, n_max, LengthMode::up_to);
  if (!best) return std::nullopt;
  BruteForceResult out;
  out.states.assign(best->states.begin(), best->states.end());
  out.log_prob = best->score.value;
  return out;
}

Polyline sequence_to_polyline(std::span<const StateId> sequence, std::span<const State> states) {
  Polyline line;
  auto push = [&](const Vec3& p) {
    if (line.empty() || (line.back() - p).norm() > 1e-9) line.push_back(p);
  };
  for (StateId s : sequence) {
    push(states[s].x0);
    push(states[s].x1);
  }
  return line;
}

json trace_to_json(const TracePath& path) {
  json poly = json::array();
  for (const auto& p : path.polyline) poly.push_back({p.x, p.y, p.z});
  return {{"states", path.states},
          {"weight", path.total_weight},
          {"log_prob", path.log_prob},
          {"polyline_um", poly}};
}

}  // namespace axtrace
