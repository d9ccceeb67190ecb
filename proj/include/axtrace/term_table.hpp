#pragma once

// Per-transition score tables for reasoning about history-dependent path
// probabilities. A transition prev -> next scores `fresh` when next's fragment
// has not appeared earlier in the sequence and `repeat` otherwise. The start
// state's fragment counts as already seen.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace axtrace {

/// Exact non-negative rational for the small probabilities of hand-built
/// instances.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
    if (den == 0) throw std::invalid_argument("zero denominator");
    normalize();
  }
  static Rational one() { return {1, 1}; }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Rational operator*(const Rational& a, const Rational& b) {
    // Cross-reduce first to keep intermediates small.
    const auto g1 = std::gcd(a.num_, b.den_);
    const auto g2 = std::gcd(b.num_, a.den_);
    return {(a.num_ / (g1 ? g1 : 1)) * (b.num_ / (g2 ? g2 : 1)),
            (a.den_ / (g2 ? g2 : 1)) * (b.den_ / (g1 ? g1 : 1))};
  }
  friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
  }

  std::string str() const { return std::to_string(num_) + "/" + std::to_string(den_); }

 private:
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const auto g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// Probability held as its logarithm; `*` adds logs.
struct LogProb {
  double value = 0.0;

  static LogProb one() { return {0.0}; }
  friend LogProb operator*(LogProb a, LogProb b) { return {a.value + b.value}; }
  friend bool operator<(LogProb a, LogProb b) { return a.value < b.value; }
  friend bool operator==(LogProb a, LogProb b) { return a.value == b.value; }
};

template <typename T>
struct TermTable {
  std::size_t n_states = 0;
  std::vector<std::size_t> fragment_of;   // per state
  std::vector<std::optional<T>> fresh;    // n_states * n_states, row = prev
  std::vector<std::optional<T>> repeat;

  explicit TermTable(std::size_t n = 0)
      : n_states(n), fragment_of(n), fresh(n * n), repeat(n * n) {
    for (std::size_t s = 0; s < n; ++s) fragment_of[s] = s;
  }

  void set(std::size_t prev, std::size_t next, T fresh_term, T repeat_term) {
    fresh[prev * n_states + next] = fresh_term;
    repeat[prev * n_states + next] = repeat_term;
  }
  const std::optional<T>& term(std::size_t prev, std::size_t next, bool is_fresh) const {
    const auto& row = is_fresh ? fresh : repeat;
    return row[prev * n_states + next];
  }
};

template <typename T>
struct ScoredSequence {
  std::vector<std::size_t> states;
  T score;
};

/// Product of the history-aware terms along `seq`; empty if some transition
/// is forbidden.
template <typename T>
std::optional<T> score_sequence(const TermTable<T>& table, const std::vector<std::size_t>& seq) {
  if (seq.empty()) throw std::invalid_argument("empty sequence");
  T score = T::one();
  std::vector<bool> seen(table.n_states, false);
  seen[table.fragment_of.at(seq.front())] = true;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const auto frag = table.fragment_of.at(seq[i]);
    const auto& t = table.term(seq[i - 1], seq[i], !seen[frag]);
    if (!t) return std::nullopt;
    score = score * *t;
    seen[frag] = true;
  }
  return score;
}

enum class LengthMode { up_to, exact };

namespace detail {

template <typename T>
bool better(const T& score, const std::vector<std::size_t>& seq, const std::optional<ScoredSequence<T>>& best) {
  if (!best) return true;
  if (best->score < score) return true;
  if (score < best->score) return false;
  if (seq.size() != best->states.size()) return seq.size() < best->states.size();
  return std::lexicographical_compare(seq.begin(), seq.end(), best->states.begin(), best->states.end());
}

template <typename T>
void enumerate(const TermTable<T>& table, std::size_t end, std::size_t n_max, LengthMode mode,
               std::vector<std::size_t>& seq, std::vector<int>& seen, const T& score,
               std::optional<ScoredSequence<T>>& best) {
  if (seq.back() == end && (mode == LengthMode::up_to || seq.size() == n_max) && better(score, seq, best)) {
    best = ScoredSequence<T>{seq, score};
  }
  if (seq.size() == n_max) return;
  const auto prev = seq.back();
  for (std::size_t next = 0; next < table.n_states; ++next) {
    const auto frag = table.fragment_of[next];
    const auto& t = table.term(prev, next, seen[frag] == 0);
    if (!t) continue;
    ++seen[frag];
    seq.push_back(next);
    enumerate(table, end, n_max, mode, seq, seen, score * *t, best);
    seq.pop_back();
    --seen[frag];
  }
}

}  // namespace detail

/// Exhaustive search over every sequence (repeats allowed) from `start` to
/// `end` with at most (or exactly) `n_max` states. Ties go to the shorter
/// sequence, then the lexicographically smaller one.
template <typename T>
std::optional<ScoredSequence<T>> brute_force_best(const TermTable<T>& table, std::size_t start, std::size_t end,
                                                  std::size_t n_max, LengthMode mode = LengthMode::up_to) {
  if (table.n_states > 12 || n_max > 8) throw std::invalid_argument("brute force limited to 12 states and length 8");
  if (start >= table.n_states || end >= table.n_states) throw std::out_of_range("state outside table");
  if (n_max == 0) return std::nullopt;
  std::optional<ScoredSequence<T>> best;
  std::vector<std::size_t> seq{start};
  std::vector<int> seen(table.n_states, 0);
  seen[table.fragment_of[start]] = 1;
  detail::enumerate(table, end, n_max, mode, seq, seen, T::one(), best);
  return best;
}

/// Textbook Viterbi trellis of exactly `n` steps that always applies the
/// fresh term, i.e. it ignores whether a fragment was already visited. It
/// keeps a single best predecessor per (step, state), ties to the smaller id.
/// Returns the decoded sequence; score it with score_sequence.
template <typename T>
std::optional<std::vector<std::size_t>> naive_viterbi(const TermTable<T>& table, std::size_t start,
                                                      std::size_t end, std::size_t n) {
  if (start >= table.n_states || end >= table.n_states) throw std::out_of_range("state outside table");
  if (n == 0) return std::nullopt;
  const std::size_t S = table.n_states;
  std::vector<std::vector<std::optional<T>>> best(n, std::vector<std::optional<T>>(S));
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(S, 0));
  best[0][start] = T::one();
  for (std::size_t step = 1; step < n; ++step) {
    for (std::size_t next = 0; next < S; ++next) {
      for (std::size_t prev = 0; prev < S; ++prev) {
        if (!best[step - 1][prev]) continue;
        const auto& t = table.term(prev, next, true);
        if (!t) continue;
        const T cand = *best[step - 1][prev] * *t;
        if (!best[step][next] || *best[step][next] < cand) {
          best[step][next] = cand;
          back[step][next] = prev;
        }
      }
    }
  }
  if (!best[n - 1][end]) return std::nullopt;
  std::vector<std::size_t> seq(n);
  seq[n - 1] = end;
  for (std::size_t step = n - 1; step > 0; --step) seq[step - 1] = back[step][seq[step]];
  return seq;
}

}  // namespace axtrace
