#include "axtrace/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "axtrace/error.hpp"
#include "axtrace/metrics.hpp"

namespace axtrace {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Probability profile: peaks on the axis, 0.95 at the tube wall, Gaussian
// falloff outside.
constexpr double kWallProb = 0.95;
constexpr double kAxisBoost = 0.04;
constexpr double kFalloffSigma = 0.3;
constexpr double kFalloffReach = 4.0 * kFalloffSigma;

Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json vec_json(const Vec3& v) { return {v.x, v.y, v.z}; }

bool censored(double arc, const std::vector<CensorGap>& gaps) {
  return std::any_of(gaps.begin(), gaps.end(),
                     [&](const CensorGap& g) { return arc >= g.start_um && arc <= g.start_um + g.length_um; });
}

// Splats a densely sampled curve into a distance field limited to `reach` um.
void splat(const Polyline& samples, const std::vector<bool>& keep, double reach, const Spacing& sp,
           const Dims& dims, std::vector<float>& dist) {
  const auto ri = static_cast<std::int64_t>(std::ceil(reach / sp.sx));
  const auto rj = static_cast<std::int64_t>(std::ceil(reach / sp.sy));
  const auto rk = static_cast<std::int64_t>(std::ceil(reach / sp.sz));
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if (!keep[n]) continue;
    const auto c = physical_to_voxel(samples[n], sp);
    for (auto k = std::max<std::int64_t>(0, c.k - rk); k <= std::min(dims.nz - 1, c.k + rk); ++k)
      for (auto j = std::max<std::int64_t>(0, c.j - rj); j <= std::min(dims.ny - 1, c.j + rj); ++j)
        for (auto i = std::max<std::int64_t>(0, c.i - ri); i <= std::min(dims.nx - 1, c.i + ri); ++i) {
          const double d = distance(voxel_to_physical({i, j, k}, sp), samples[n]);
          auto& slot = dist[static_cast<std::size_t>(i + dims.nx * (j + dims.ny * k))];
          if (d < slot) slot = static_cast<float>(d);
        }
  }
}

std::uint16_t draw_intensity(std::mt19937_64& rng, double mean, double sd) {
  std::normal_distribution<double> nd(mean, sd);
  return static_cast<std::uint16_t>(std::clamp(std::round(nd(rng)), 0.0, 65535.0));
}

}  // namespace

Polyline phantom_centerline(const PhantomSpec& spec, double step_um) {
  if (!spec.polyline.empty()) return resample_polyline(spec.polyline, step_um);
  const auto& h = spec.helix;
  const double height = h.z_end_um - h.z_start_um;
  const double sweep = 2.0 * std::numbers::pi * h.turns;
  const double length = std::hypot(sweep * h.radius_um, height);
  const auto n = static_cast<std::size_t>(std::ceil(length / step_um));
  Polyline out;
  out.reserve(n + 1);
  for (std::size_t m = 0; m <= n; ++m) {
    const double t = static_cast<double>(m) / static_cast<double>(n);
    out.push_back({h.center_x_um + h.radius_um * std::cos(sweep * t),
                   h.center_y_um + h.radius_um * std::sin(sweep * t), h.z_start_um + height * t});
  }
  return out;
}

Phantom make_phantom(const PhantomSpec& spec) {
  if (!(spec.tube_radius_um > 0.0)) throw std::invalid_argument("tube radius must be positive");
  const auto& dims = spec.dims;
  const auto& sp = spec.spacing;
  const auto total = static_cast<std::size_t>(dims.count());
  const float inf = std::numeric_limits<float>::infinity();
  const double reach = spec.tube_radius_um + kFalloffReach;

  const auto curve = phantom_centerline(spec, 0.1);
  std::vector<bool> keep(curve.size());
  double arc = 0.0;
  for (std::size_t n = 0; n < curve.size(); ++n) {
    if (n > 0) arc += distance(curve[n - 1], curve[n]);
    keep[n] = !censored(arc, spec.gaps);
  }
  std::vector<float> dist(total, inf);
  splat(curve, keep, reach, sp, dims, dist);
  if (spec.island) {
    const Polyline seg = resample_polyline({spec.island->first, spec.island->second}, 0.1);
    splat(seg, std::vector<bool>(seg.size(), true), reach, sp, dims, dist);
  }

  Phantom ph{Volume(dims, sp, 0), ProbabilityMap(dims, sp, 0.0f), {}, {}, {}, {}};
  std::mt19937_64 rng(spec.seed);
  auto vol = ph.volume.data();
  auto prob = ph.probability.data();
  std::vector<std::size_t> fg_pool, bg_pool;
  for (std::size_t s = 0; s < total; ++s) {
    const double d = dist[s];
    if (d <= spec.tube_radius_um) {
      vol[s] = draw_intensity(rng, spec.fg_mean, spec.fg_sd);
      prob[s] = static_cast<float>(kWallProb + kAxisBoost * (1.0 - d / spec.tube_radius_um));
      fg_pool.push_back(s);
    } else {
      vol[s] = draw_intensity(rng, spec.bg_mean, spec.bg_sd);
      if (d < reach) {
        const double u = (d - spec.tube_radius_um) / kFalloffSigma;
        prob[s] = static_cast<float>(kWallProb * std::exp(-0.5 * u * u));
      } else {
        bg_pool.push_back(s);
      }
    }
  }

  auto pick = [&](const std::vector<std::size_t>& pool) {
    std::vector<std::size_t> chosen;
    std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), std::min(spec.label_samples, pool.size()), rng);
    std::vector<VoxelIndex> out;
    out.reserve(chosen.size());
    for (auto s : chosen) out.push_back(ph.volume.unravel(s));
    return out;
  };
  ph.labels.fg = pick(fg_pool);
  ph.labels.bg = pick(bg_pool);

  ph.truth = resample_polyline(phantom_centerline(spec, 1.0), 1.0);
  const auto first = std::find(keep.begin(), keep.end(), true);
  const auto last = std::find(keep.rbegin(), keep.rend(), true);
  if (first == keep.end()) throw std::invalid_argument("phantom is censored end to end");
  ph.start_um = curve[static_cast<std::size_t>(first - keep.begin())];
  ph.end_um = curve[curve.size() - 1 - static_cast<std::size_t>(last - keep.rbegin())];
  return ph;
}

PhantomSpec phantom_spec_from_json(const json& j) {
  PhantomSpec s;
  try {
    if (j.contains("dims")) {
      const auto& d = j["dims"];
      s.dims = {d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>(), d.at(2).get<std::int64_t>()};
    }
    if (j.contains("spacing")) {
      const auto v = vec_from(j["spacing"]);
      s.spacing = {v.x, v.y, v.z};
    }
    if (j.contains("helix")) {
      const auto& h = j["helix"];
      s.helix.center_x_um = h.value("center_x_um", s.helix.center_x_um);
      s.helix.center_y_um = h.value("center_y_um", s.helix.center_y_um);
      s.helix.radius_um = h.value("radius_um", s.helix.radius_um);
      s.helix.z_start_um = h.value("z_start_um", s.helix.z_start_um);
      s.helix.z_end_um = h.value("z_end_um", s.helix.z_end_um);
      s.helix.turns = h.value("turns", s.helix.turns);
    }
    if (j.contains("polyline")) {
      for (const auto& p : j["polyline"]) s.polyline.push_back(vec_from(p));
    }
    s.tube_radius_um = j.value("tube_radius_um", s.tube_radius_um);
    s.fg_mean = j.value("fg_mean", s.fg_mean);
    s.fg_sd = j.value("fg_sd", s.fg_sd);
    s.bg_mean = j.value("bg_mean", s.bg_mean);
    s.bg_sd = j.value("bg_sd", s.bg_sd);
    if (j.contains("gaps")) {
      for (const auto& g : j["gaps"]) s.gaps.push_back({g.at("start_um").get<double>(), g.at("length_um").get<double>()});
    }
    if (j.contains("island")) {
      s.island = std::make_pair(vec_from(j["island"].at("from")), vec_from(j["island"].at("to")));
    }
    s.label_samples = j.value("label_samples", s.label_samples);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed phantom spec: ") + e.what());
  }
  return s;
}

json phantom_spec_to_json(const PhantomSpec& s) {
  json j{{"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
         {"spacing", {s.spacing.sx, s.spacing.sy, s.spacing.sz}},
         {"helix",
          {{"center_x_um", s.helix.center_x_um},
           {"center_y_um", s.helix.center_y_um},
           {"radius_um", s.helix.radius_um},
           {"z_start_um", s.helix.z_start_um},
           {"z_end_um", s.helix.z_end_um},
           {"turns", s.helix.turns}}},
         {"tube_radius_um", s.tube_radius_um},
         {"fg_mean", s.fg_mean},
         {"fg_sd", s.fg_sd},
         {"bg_mean", s.bg_mean},
         {"bg_sd", s.bg_sd},
         {"label_samples", s.label_samples},
         {"seed", s.seed}};
  if (!s.polyline.empty()) {
    json pts = json::array();
    for (const auto& p : s.polyline) pts.push_back(vec_json(p));
    j["polyline"] = pts;
  }
  json gaps = json::array();
  for (const auto& g : s.gaps) gaps.push_back({{"start_um", g.start_um}, {"length_um", g.length_um}});
  j["gaps"] = gaps;
  if (s.island) j["island"] = {{"from", vec_json(s.island->first)}, {"to", vec_json(s.island->second)}};
  return j;
}

void write_phantom(const Phantom& ph, const PhantomSpec& spec, const fs::path& dir) {
  fs::create_directories(dir);
  save_volume(ph.volume, dir / "volume");
  save_probability_map(ph.probability, dir / "probability");
  save_labels(ph.labels, dir / "labels.json");
  export_swc(ph.truth, dir / "truth.swc");

  const json meta{{"spec", phantom_spec_to_json(spec)},
                  {"start_um", vec_json(ph.start_um)},
                  {"end_um", vec_json(ph.end_um)}};
  std::ofstream(dir / "phantom.json") << meta.dump(2) << '\n';

  const json config{{"volume", "volume.json"},
                    {"prob_map", "probability.json"},
                    {"labels", "labels.json"},
                    {"out_dir", "out"},
                    {"seed", spec.seed}};
  std::ofstream(dir / "pipeline.json") << config.dump(2) << '\n';
}

}  // namespace axtrace
