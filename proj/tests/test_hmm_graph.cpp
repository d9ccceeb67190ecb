#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "axtrace/fragments.hpp"
#include "axtrace/hmm_graph.hpp"

using namespace axtrace;

namespace {

// A state whose head sits at `head` pointing along `dir`, tail one unit back.
State along(StateId id, std::uint32_t frag, Vec3 tail, Vec3 dir) {
  State s;
  s.id = id;
  s.fragment_index = frag;
  s.x0 = tail;
  s.x1 = tail + dir;
  s.tau1 = dir * (1.0 / dir.norm());
  s.tau0 = s.tau1 * -1.0;
  return s;
}

Fragment straight_fragment(std::uint32_t id, std::int64_t i0, std::int64_t i1, std::int64_t j, const Spacing& sp) {
  Fragment f;
  f.id = id;
  for (std::int64_t i = i0; i <= i1; ++i) f.voxels.push_back({i, j, 0});
  f.center = f.voxels[f.voxels.size() / 2];
  f.x0 = voxel_to_physical(f.voxels.front(), sp);
  f.x1 = voxel_to_physical(f.voxels.back(), sp);
  f.tau0 = (f.x0 - f.x1) * (1.0 / (f.x0 - f.x1).norm());
  f.tau1 = f.tau0 * -1.0;
  return f;
}

// alpha_1 == 1 wherever intensity is 100, floor elsewhere.
IntensityModel bright_model() {
  return IntensityModel(GaussianKde::with_bandwidth({100.0}, 0.01), GaussianKde::with_bandwidth({0.0}, 5.0));
}

}  // namespace

TEST_CASE("states and flips") {
  FragmentSet set;
  set.dims = {10, 1, 1};
  set.spacing = {1, 1, 1};
  set.fragments.push_back(straight_fragment(1, 0, 4, 0, set.spacing));
  const auto states = make_states(set);
  REQUIRE(states.size() == 2);
  CHECK(states[0].id == 0);
  CHECK(states[1].id == 1);
  CHECK(states[1].x0.x == states[0].x1.x);
  const auto [t0, t1] = estimate_tangents(states[1].x0, states[1].x1);
  CHECK(states[1].tau0.x == doctest::Approx(t0.x));
  CHECK(states[1].tau1.x == doctest::Approx(t1.x));
  CHECK(states[1].tau1.x == -states[0].tau1.x);
  const auto twice = flip(flip(states[0]));
  CHECK(twice.x0.x == states[0].x0.x);
  CHECK(twice.tau0.x == states[0].tau0.x);
  CHECK(twice.orientation == states[0].orientation);

  FragmentSet many;
  many.dims = {1000, 1, 1};
  many.spacing = {1, 1, 1};
  for (std::uint32_t n = 0; n < 100; ++n) many.fragments.push_back(straight_fragment(n + 1, 10 * n, 10 * n + 3, 0, many.spacing));
  const auto ms = make_states(many);
  std::set<StateId> ids;
  for (const auto& s : ms) ids.insert(s.id);
  CHECK(ids.size() == 200);
  CHECK(state_id_for(7, Orientation::reversed) == 15);
  CHECK(parse_orientation("reversed") == Orientation::reversed);
  CHECK(orientation_name(Orientation::forward) == "forward");
}

TEST_CASE("curvature and energy") {
  const Hyperparams h;
  const auto prev = along(0, 0, {-1, 0, 0}, {1, 0, 0});  // head at origin, tau1 = +x
  SUBCASE("straight continuation is flat") {
    const auto next = along(2, 1, {1, 0, 0}, {1, 0, 0});
    CHECK(curvature_sq(prev, next) == doctest::Approx(0.0));
    CHECK(energy(prev, next, h) == doctest::Approx(10.0));
  }
  SUBCASE("right angle") {
    const auto next = along(2, 1, {0, 1, 0}, {0, 1, 0});
    CHECK(curvature_sq(prev, next) == doctest::Approx(0.5));
    CHECK(energy(prev, next, h) == doctest::Approx(10 * 1 + 1000 * 0.5));
    CHECK(bend_angle_deg(prev, next) == doctest::Approx(90.0));
  }
  SUBCASE("reversal") {
    const auto next = along(2, 1, {-1, 0, 0}, {-1, 0, 0});
    CHECK(1.0 - dot(prev.tau1, connecting_tangent(prev, next)) == doctest::Approx(2.0));
    CHECK_FALSE(allowed(prev, next, h));
  }
  SUBCASE("gap of 2 um, collinear") {
    const auto next = along(2, 1, {2, 0, 0}, {1, 0, 0});
    CHECK(energy(prev, next, h) == doctest::Approx(40.0));
  }
  SUBCASE("touching fragments fall back to the head tangent") {
    const auto next = along(2, 1, {0, 0, 0}, {1, 0, 0});
    CHECK(connecting_tangent(prev, next).x == 1.0);
    CHECK(energy(prev, next, h) == doctest::Approx(0.0));
  }
  SUBCASE("energy grows with gap and with curvature") {
    double last = -1;
    for (double g = 0.5; g < 10; g += 0.5) {
      const double u = energy(prev, along(2, 1, {g, 0, 0}, {1, 0, 0}), h);
      CHECK(u > last);
      last = u;
    }
    Hyperparams only_kappa = h;
    only_kappa.alpha_d = 0;
    last = -1;
    for (double a = 0.0; a < 1.5; a += 0.1) {
      const auto next = along(2, 1, {std::cos(a), std::sin(a), 0}, {std::cos(a), std::sin(a), 0});
      const double u = energy(prev, next, only_kappa);
      CHECK(u > last);
      last = u;
    }
  }
}

TEST_CASE("allowed") {
  const Hyperparams h;
  const auto prev = along(0, 0, {-1, 0, 0}, {1, 0, 0});
  CHECK_FALSE(allowed(prev, along(2, 1, {16, 0, 0}, {1, 0, 0}), h));
  CHECK(allowed(prev, along(2, 1, {3 * std::cos(0.1745), 3 * std::sin(0.1745), 0}, {1, 0, 0}), h));
  CHECK_FALSE(allowed(prev, prev, h));
  CHECK_FALSE(allowed(prev, along(1, 0, {1, 0, 0}, {1, 0, 0}), h));

  SUBCASE("successor-angle prune is opt-in") {
    // Straight gap, but the successor points backwards.
    const auto next = along(2, 1, {3, 0, 0}, {-1, 0, 0});
    CHECK(allowed(prev, next, h));
    Hyperparams strict = h;
    strict.prune_successor_angle = true;
    CHECK_FALSE(allowed(prev, next, strict));
  }
}

TEST_CASE("transition_log_prob") {
  Hyperparams h;
  h.alpha_kappa = 0;
  const auto prev = along(0, 0, {-1, 0, 0}, {1, 0, 0});
  SUBCASE("single successor") {
    const std::vector<State> c{along(2, 1, {1, 0, 0}, {1, 0, 0})};
    const auto lp = transition_log_prob(prev, c, h);
    REQUIRE(lp.size() == 1);
    CHECK(lp[0].second == doctest::Approx(0.0));
  }
  SUBCASE("equal energies split evenly") {
    const std::vector<State> c{along(2, 1, {1, 0, 0}, {1, 0, 0}), along(4, 2, {0, 1, 0}, {1, 0, 0})};
    const auto lp = transition_log_prob(prev, c, h);
    REQUIRE(lp.size() == 2);
    for (const auto& [id, v] : lp) CHECK(v == doctest::Approx(std::log(0.5)));
  }
  SUBCASE("energies 0, 1, 2") {
    h.alpha_d = 1.0;
    const std::vector<State> c{along(2, 1, {0, 0, 0}, {1, 0, 0}), along(4, 2, {1, 0, 0}, {1, 0, 0}),
                               along(6, 3, {std::sqrt(2.0), 0, 0}, {1, 0, 0})};
    const auto lp = transition_log_prob(prev, c, h);
    REQUIRE(lp.size() == 3);
    CHECK(std::exp(lp[0].second) == doctest::Approx(1.0 / (1 + std::exp(-1.0) + std::exp(-2.0))));
    CHECK(std::exp(lp[0].second) == doctest::Approx(0.6652).epsilon(1e-4));
  }
  SUBCASE("nothing allowed is a sink") {
    const std::vector<State> c{along(2, 1, {40, 0, 0}, {1, 0, 0})};
    CHECK(transition_log_prob(prev, c, h).empty());
  }
  SUBCASE("huge energies stay finite") {
    h.alpha_d = 1e6;
    const std::vector<State> c{along(2, 1, {10, 0, 0}, {1, 0, 0}), along(4, 2, {11, 0, 0}, {1, 0, 0})};
    const auto lp = transition_log_prob(prev, c, h);
    REQUIRE(lp.size() == 2);
    CHECK(std::isfinite(lp[1].second));
    CHECK(lp[0].second == doctest::Approx(0.0));
  }
}

TEST_CASE("edge weights on a two-fragment row") {
  const Spacing sp{1, 1, 1};
  FragmentSet set;
  set.dims = {20, 1, 1};
  set.spacing = sp;
  set.fragments.push_back(straight_fragment(1, 0, 4, 0, sp));
  set.fragments.push_back(straight_fragment(2, 9, 13, 0, sp));
  const auto labels = fragment_label_volume(set);
  const auto states = make_states(set);
  const Hyperparams h;
  const auto model = bright_model();

  SUBCASE("all voxels bright: weight is the prior alone") {
    Volume v(set.dims, sp, std::uint16_t{100});
    const auto g = build_graph(set, model, v, labels, h);
    const auto* e = g.find_edge(0, 2);
    REQUIRE(e != nullptr);
    CHECK(e->log_lik() == doctest::Approx(0.0));
    CHECK(e->weight == doctest::Approx(-e->log_prior));
    CHECK(imputed_voxels(states[0], states[2], v, labels).size() == 4);
  }
  SUBCASE("dark gap voxels are charged individually") {
    Volume v(set.dims, sp, std::uint16_t{100});
    v[{6, 0, 0}] = 0;
    v[{7, 0, 0}] = 0;
    const auto g = build_graph(set, model, v, labels, h);
    const auto* e = g.find_edge(0, 2);
    REQUIRE(e != nullptr);
    double expected = 0;
    for (std::int64_t i = 5; i <= 8; ++i) expected += model.log_alpha(v[{i, 0, 0}], IntensityClass::foreground);
    CHECK(e->log_lik_gap == doctest::Approx(expected));
    CHECK(e->log_lik_fragment == doctest::Approx(0.0));
    CHECK(e->weight == doctest::Approx(-expected - e->log_prior));
    const auto succ = std::vector<State>{states[2], states[3]};
    CHECK(edge_weight(states[0], states[2], succ, set, model, v, labels, h) == doctest::Approx(e->weight));
  }
  SUBCASE("touching fragments impute nothing") {
    FragmentSet t = set;
    t.fragments[1] = straight_fragment(2, 5, 9, 0, sp);
    const auto tl = fragment_label_volume(t);
    const auto ts = make_states(t);
    Volume v(t.dims, sp, std::uint16_t{100});
    CHECK(imputed_voxels(ts[0], ts[2], v, tl).empty());
  }
  SUBCASE("gaps over 15 um have no edges") {
    FragmentSet far = set;
    far.dims = {40, 1, 1};
    far.fragments[1] = straight_fragment(2, 25, 30, 0, sp);
    Volume v(far.dims, sp, std::uint16_t{100});
    CHECK(build_graph(far, model, v, fragment_label_volume(far), h).edge_count() == 0);
  }
  SUBCASE("graph export has one line per edge") {
    Volume v(set.dims, sp, std::uint16_t{100});
    const auto g = build_graph(set, model, v, labels, h);
    // Forward 0->2 and mirrored 3->1, plus 0->3 and 3->0 whose only defect is
    // the successor-end bend, which the default settings do not prune.
    CHECK(g.edge_count() == 4);
    std::ostringstream out;
    export_graph_jsonl(g, out);
    std::istringstream in(out.str());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("from"));
      CHECK(j.contains("w"));
      ++n;
    }
    CHECK(n == g.edge_count());
  }
}

TEST_CASE("random graphs match the all-pairs filter and are normalised") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> pos(0, 39);
  std::uniform_int_distribution<int> len(2, 5);
  std::uniform_int_distribution<int> val(60, 140);
  const Spacing sp{1, 1, 1};
  const Hyperparams h;
  for (int trial = 0; trial < 20; ++trial) {
    FragmentSet set;
    set.dims = {50, 50, 3};
    set.spacing = sp;
    LabelVolume occupied(set.dims, sp);
    for (int n = 0; n < 15; ++n) {
      const std::int64_t i = pos(rng), j = pos(rng), l = len(rng);
      Fragment f;
      f.id = static_cast<std::uint32_t>(set.fragments.size() + 1);
      bool clash = false;
      for (std::int64_t d = 0; d < l; ++d) {
        const VoxelIndex v{i + d, j + (trial % 2 ? d / 2 : 0), 1};
        if (occupied[v]) clash = true;
        f.voxels.push_back(v);
      }
      if (clash) continue;
      for (const auto& v : f.voxels) occupied[v] = 1;
      f.center = f.voxels[0];
      f.x0 = voxel_to_physical(f.voxels.front(), sp);
      f.x1 = voxel_to_physical(f.voxels.back(), sp);
      std::tie(f.tau0, f.tau1) = std::pair{(f.x0 - f.x1) * (1 / (f.x0 - f.x1).norm()), (f.x1 - f.x0) * (1 / (f.x0 - f.x1).norm())};
      set.fragments.push_back(std::move(f));
    }
    Volume v(set.dims, sp);
    for (auto& x : v.data()) x = static_cast<std::uint16_t>(val(rng));
    const auto model = IntensityModel::fit(std::vector<double>{100, 110, 120, 130}, std::vector<double>{60, 70, 80, 90});
    const auto g = build_graph(set, model, v, fragment_label_volume(set), h);
    std::size_t expected = 0;
    for (const auto& a : g.states) {
      double mass = 0;
      for (const auto& b : g.states) {
        const bool ok = allowed(a, b, h);
        expected += ok;
        CHECK((g.find_edge(a.id, b.id) != nullptr) == ok);
      }
      for (const auto& e : g.out[a.id]) {
        mass += std::exp(e.log_prior);
        CHECK(e.weight >= 0.0);
      }
      if (!g.out[a.id].empty()) CHECK(std::abs(mass - 1.0) < 1e-9);
    }
    CHECK(g.edge_count() == expected);
  }
}

TEST_CASE("hyperparameters round-trip and validate") {
  Hyperparams h;
  h.alpha_d = 3;
  h.prune_successor_angle = true;
  const auto back = hyperparams_from_json(hyperparams_to_json(h));
  CHECK(back.alpha_d == 3);
  CHECK(back.prune_successor_angle);
  const auto parsed = hyperparams_from_json(nlohmann::json::parse(R"({"alpha_d":10,"alpha_kappa":1000,"d_max_um":15,"theta_max_deg":150})"));
  CHECK(parsed.alpha_kappa == 1000);
  CHECK_THROWS(hyperparams_from_json(nlohmann::json::parse(R"({"alpha_d":-1})")));
}
