#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "axtrace/volume.hpp"

using namespace axtrace;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("axtrace_volume_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Volume random_volume(std::mt19937_64& rng, Dims d) {
  Volume v(d, Spacing{0.3, 0.3, 1.0});
  std::uniform_int_distribution<int> val(0, 65535);
  for (auto& x : v.data()) x = static_cast<std::uint16_t>(val(rng));
  return v;
}

}  // namespace

TEST_CASE("smallest well-formed volume loads with four voxels") {
  const auto dir = scratch("small");
  std::ofstream(dir / "v.json") << R"({"dims":[2,2,1],"spacing":[0.3,0.3,1.0],"dtype":"u16"})";
  const std::uint16_t payload[4] = {1, 2, 3, 4};
  std::ofstream(dir / "v.raw", std::ios::binary).write(reinterpret_cast<const char*>(payload), sizeof payload);
  const auto v = load_volume(dir / "v");
  CHECK(v.dims().count() == 4);
  CHECK(v[{1, 1, 0}] == 4);
  CHECK(v.spacing().sz == doctest::Approx(1.0));
}

TEST_CASE("payload shorter than the header demands is rejected") {
  const auto dir = scratch("short");
  std::ofstream(dir / "v.json") << R"({"dims":[2,2,1],"spacing":[0.3,0.3,1.0],"dtype":"u16"})";
  const std::uint16_t payload[3] = {1, 2, 3};
  std::ofstream(dir / "v.raw", std::ios::binary).write(reinterpret_cast<const char*>(payload), sizeof payload);
  CHECK_THROWS_AS(load_volume(dir / "v.json"), FormatError);
}

TEST_CASE("dtype mismatch and missing files are reported") {
  const auto dir = scratch("dtype");
  std::ofstream(dir / "v.json") << R"({"dims":[1,1,1],"spacing":[1,1,1],"dtype":"f32"})";
  std::ofstream(dir / "v.raw", std::ios::binary).write("\0\0\0\0", 4);
  CHECK_THROWS_AS(load_volume(dir / "v"), FormatError);
  CHECK_NOTHROW(load_probability_map(dir / "v"));
  CHECK_THROWS_AS(load_volume(dir / "missing"), IoError);
}

TEST_CASE("save then load reproduces random volumes bit for bit") {
  std::mt19937_64 rng(7);
  const auto dir = scratch("roundtrip");
  for (int trial = 0; trial < 5; ++trial) {
    const Dims d{1 + trial, 3, 2 + trial % 2};
    const auto v = random_volume(rng, d);
    save_volume(v, dir / "v");
    CHECK(load_volume(dir / "v") == v);

    ProbabilityMap p(d, v.spacing());
    for (std::size_t n = 0; n < p.data().size(); ++n) p.data()[n] = static_cast<float>(v.data()[n]) / 65535.0f;
    save_probability_map(p, dir / "p");
    CHECK(load_probability_map(dir / "p") == p);

    LabelVolume l(d, v.spacing());
    for (std::size_t n = 0; n < l.data().size(); ++n) l.data()[n] = static_cast<std::uint32_t>(n * 977);
    save_label_volume(l, dir / "l");
    CHECK(load_label_volume(dir / "l") == l);
  }
}

TEST_CASE("voxel_to_physical uses the centre-at-index convention") {
  CHECK(voxel_to_physical({0, 0, 0}, Spacing{0.7, 0.2, 3.0}).norm() == 0.0);
  const auto a = voxel_to_physical({1, 1, 1}, Spacing{0.3, 0.3, 1.0});
  CHECK(a.x == doctest::Approx(0.3));
  CHECK(a.y == doctest::Approx(0.3));
  CHECK(a.z == doctest::Approx(1.0));
  const auto b = voxel_to_physical({10, 0, 3}, Spacing{0.5, 0.5, 2.0});
  CHECK(b.x == doctest::Approx(5.0));
  CHECK(b.z == doctest::Approx(6.0));
  CHECK_THROWS_AS(voxel_to_physical({2, 0, 0}, Dims{2, 2, 2}, Spacing{}), std::out_of_range);
  CHECK(physical_to_voxel(b, Spacing{0.5, 0.5, 2.0}) == VoxelIndex{10, 0, 3});
}

TEST_CASE("linear offsets decode back to their voxel index") {
  Volume v(Dims{3, 4, 5}, Spacing{});
  for (std::int64_t k = 0; k < 5; ++k)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t i = 0; i < 3; ++i) CHECK(v.unravel(v.linear({i, j, k})) == VoxelIndex{i, j, k});
}

TEST_CASE("threshold_probability") {
  ProbabilityMap two(Dims{2, 1, 1}, Spacing{}, std::vector<float>{0.95f, 0.5f});
  const auto m = threshold_probability(two, 0.9);
  CHECK(m.data()[0] == 1);
  CHECK(m.data()[1] == 0);

  SUBCASE("t = 0 keeps everything") {
    const auto all = threshold_probability(two, 0.0);
    CHECK(std::all_of(all.data().begin(), all.data().end(), [](auto x) { return x == 1; }));
  }
  SUBCASE("out-of-range thresholds are rejected") {
    CHECK_THROWS_AS(threshold_probability(two, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(threshold_probability(two, 1.5), std::invalid_argument);
  }
  SUBCASE("elementwise oracle and monotonicity on a random map") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ProbabilityMap p(Dims{6, 5, 4}, Spacing{});
    for (auto& x : p.data()) x = u(rng);
    const auto half = threshold_probability(p, 0.5);
    const auto higher = threshold_probability(p, 0.7);
    for (std::size_t n = 0; n < p.data().size(); ++n) {
      CHECK((half.data()[n] == 1) == (p.data()[n] >= 0.5f));
      CHECK(higher.data()[n] <= half.data()[n]);
    }
  }
}

TEST_CASE("mip") {
  SUBCASE("constant volume gives a constant image") {
    Volume v(Dims{3, 4, 5}, Spacing{}, std::uint16_t{42});
    for (auto axis : {Axis::x, Axis::y, Axis::z}) {
      const auto img = mip(v, axis);
      CHECK(std::all_of(img.pixels.begin(), img.pixels.end(), [](auto x) { return x == 42; }));
    }
  }
  SUBCASE("a single bright voxel lands at its projected pixel") {
    Volume v(Dims{3, 4, 5}, Spacing{});
    v[{2, 1, 3}] = 900;
    for (auto axis : {Axis::x, Axis::y, Axis::z}) {
      const auto img = mip(v, axis);
      const auto [w, h] = projected_extent(v.dims(), axis);
      CHECK(img.width == w);
      CHECK(img.height == h);
      const auto [u, vv] = project_index({2, 1, 3}, axis);
      CHECK(img.at(u, vv) == 900);
      CHECK(std::count(img.pixels.begin(), img.pixels.end(), 900) == 1);
    }
  }
  SUBCASE("random volume matches a direct loop and commutes with a shift") {
    std::mt19937_64 rng(11);
    auto v = random_volume(rng, Dims{5, 6, 7});
    for (auto& x : v.data()) x = static_cast<std::uint16_t>(x / 2);
    const auto img = mip(v, Axis::z);
    for (std::int64_t j = 0; j < 6; ++j)
      for (std::int64_t i = 0; i < 5; ++i) {
        std::uint16_t m = 0;
        for (std::int64_t k = 0; k < 7; ++k) m = std::max(m, v[{i, j, k}]);
        CHECK(img.at(i, j) == m);
      }
    auto shifted = v;
    for (auto& x : shifted.data()) x = static_cast<std::uint16_t>(x + 100);
    const auto img2 = mip(shifted, Axis::z);
    for (std::size_t n = 0; n < img.pixels.size(); ++n) CHECK(img2.pixels[n] == img.pixels[n] + 100);
  }
}

TEST_CASE("axis names parse and print") {
  CHECK(parse_axis("y") == Axis::y);
  CHECK(axis_name(Axis::x) == "x");
  CHECK_THROWS_AS(parse_axis("w"), std::invalid_argument);
}
