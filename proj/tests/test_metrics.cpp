#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"

#include "axtrace/error.hpp"
#include "axtrace/metrics.hpp"

using namespace axtrace;

namespace {

Polyline random_polyline(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> step(-3.0, 3.0);
  Polyline p{{0, 0, 0}};
  for (std::size_t i = 1; i < n; ++i) p.push_back(p.back() + Vec3{step(rng), step(rng), step(rng)});
  return p;
}

// Exhaustive minimum over monotone couplings, for tiny inputs.
double frechet_brute(const Polyline& p, const Polyline& q, std::size_t i = 0, std::size_t j = 0) {
  const double here = distance(p[i], q[j]);
  if (i + 1 == p.size() && j + 1 == q.size()) return here;
  double best = INFINITY;
  if (i + 1 < p.size()) best = std::min(best, frechet_brute(p, q, i + 1, j));
  if (j + 1 < q.size()) best = std::min(best, frechet_brute(p, q, i, j + 1));
  if (i + 1 < p.size() && j + 1 < q.size()) best = std::min(best, frechet_brute(p, q, i + 1, j + 1));
  return std::max(here, best);
}

}  // namespace

TEST_CASE("resampling") {
  const auto r = resample_polyline({{0, 0, 0}, {3, 0, 0}}, 1.0);
  REQUIRE(r.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(r[i].x == doctest::Approx(i));
  CHECK(resample_polyline({{0, 0, 0}, {0.4, 0, 0}}, 1.0).size() == 2);
  CHECK(resample_polyline({{1, 2, 3}}, 1.0).size() == 1);
  CHECK_THROWS_AS(resample_polyline({{0, 0, 0}, {1, 0, 0}}, 0.0), std::invalid_argument);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_polyline(rng, 2 + trial % 7);
    const auto q = resample_polyline(p, 1.0);
    CHECK(arc_length(q) == doctest::Approx(arc_length(p)).epsilon(1e-9));
    CHECK(distance(q.front(), p.front()) == 0.0);
    CHECK(distance(q.back(), p.back()) == 0.0);
    for (std::size_t i = 1; i < q.size(); ++i) CHECK(distance(q[i - 1], q[i]) <= 1.0 + 1e-9);
  }
}

TEST_CASE("discrete Frechet") {
  const Polyline p{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK(frechet_discrete(p, p) == 0.0);
  CHECK(frechet_discrete({{0, 0, 0}, {1, 0, 0}}, {{0, 1, 0}, {1, 1, 0}}) == doctest::Approx(1.0));
  CHECK(frechet_discrete(p, {{0, 0, 0}, {1, 2, 0}, {2, 0, 0}}) == doctest::Approx(2.0));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto a = random_polyline(rng, 1 + trial % 6);
    const auto b = random_polyline(rng, 1 + (trial / 6) % 6);
    const double f = frechet_discrete(a, b);
    CHECK(f == doctest::Approx(frechet_brute(a, b)).epsilon(1e-12));
    CHECK(f == frechet_discrete(b, a));
    CHECK(f >= distance(a.front(), b.front()));
    CHECK(f >= distance(a.back(), b.back()));
  }
}

TEST_CASE("metric properties after resampling") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = resample_polyline(random_polyline(rng, 5), 1.0);
    const auto b = resample_polyline(random_polyline(rng, 5), 1.0);
    const auto c = resample_polyline(random_polyline(rng, 5), 1.0);
    CHECK(frechet_discrete(a, c) <= frechet_discrete(a, b) + frechet_discrete(b, c) + 1e-9);
    CHECK(spatial_distance(a, b) == doctest::Approx(spatial_distance(b, a)));
    CHECK(frechet_discrete(a, b) >= spatial_distance(a, b) - 1e-12);

    const auto raw = random_polyline(rng, 4), raw2 = random_polyline(rng, 4);
    const double coarse = frechet_discrete(resample_polyline(raw, 1.0), resample_polyline(raw2, 1.0));
    const double fine = frechet_discrete(resample_polyline(raw, 0.5), resample_polyline(raw2, 0.5));
    CHECK(fine <= coarse + 1.0);
  }
}

TEST_CASE("spatial distance") {
  const Polyline p{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  CHECK(spatial_distance(p, p) == 0.0);
  const Polyline shifted{{0, 1, 0}, {1, 1, 0}, {2, 1, 0}, {3, 1, 0}};
  CHECK(spatial_distance(p, shifted) == doctest::Approx(1.0));
  const Polyline sub{{1, 0, 0}, {2, 0, 0}};
  CHECK(directed_divergence(sub, p) == 0.0);
  CHECK(directed_divergence(p, sub) > 0.0);
  const auto cmp = compare_reconstructions(p, p);
  CHECK(cmp.frechet_um == 0.0);
  CHECK(cmp.sd_um == 0.0);
}

TEST_CASE("SWC export and import") {
  std::ostringstream out;
  write_swc({{0, 0, 0}, {1, 2, 3}}, out);
  std::istringstream lines(out.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("1 2 ", 0) == 0);
  CHECK(rows[0].substr(rows[0].size() - 3) == " -1");
  CHECK(rows[1].substr(rows[1].size() - 2) == " 1");

  std::mt19937_64 rng(1);
  const auto p = random_polyline(rng, 12);
  const auto path = std::filesystem::temp_directory_path() / "axtrace_metrics.swc";
  export_swc(p, path);
  const auto back = import_swc(path);
  REQUIRE(back.size() == p.size());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(distance(back[i], p[i]) < 1e-6);

  std::istringstream branching("1 2 0 0 0 1 -1\n2 2 1 0 0 1 1\n3 2 2 0 0 1 1\n");
  CHECK_THROWS_AS(read_swc(branching), FormatError);
  std::istringstream garbage("1 2 zero 0 0 1 -1\n");
  CHECK_THROWS_AS(read_swc(garbage), FormatError);
  std::istringstream commented("# header\n\n1 2 0 0 0 1 -1\n 2 2 1 0 0 1 1\n");
  CHECK(read_swc(commented).size() == 2);
}
