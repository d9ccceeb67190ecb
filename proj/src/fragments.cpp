#include "axtrace/fragments.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"

#include "axtrace/error.hpp"

namespace axtrace {

using nlohmann::json;
namespace fs = std::filesystem;

const Fragment& FragmentSet::by_id(std::uint32_t id) const {
  if (id == 0 || id > fragments.size()) throw std::out_of_range("unknown fragment id " + std::to_string(id));
  return fragments[id - 1];
}

namespace {

template <typename Visit>
void for_each_neighbor26(const VoxelIndex& v, const Dims& d, Visit&& visit) {
  for (std::int64_t dk = -1; dk <= 1; ++dk)
    for (std::int64_t dj = -1; dj <= 1; ++dj)
      for (std::int64_t di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0 && dk == 0) continue;
        const VoxelIndex n{v.i + di, v.j + dj, v.k + dk};
        if (d.contains(n)) visit(n);
      }
}

// Splits an arbitrary voxel list into 26-connected pieces, each sorted, pieces
// ordered by their smallest voxel.
std::vector<std::vector<VoxelIndex>> connected_pieces(std::vector<VoxelIndex> voxels) {
  std::sort(voxels.begin(), voxels.end());
  std::vector<bool> seen(voxels.size(), false);
  auto find = [&](const VoxelIndex& v) -> std::ptrdiff_t {
    auto it = std::lower_bound(voxels.begin(), voxels.end(), v);
    return (it != voxels.end() && *it == v) ? it - voxels.begin() : -1;
  };
  std::vector<std::vector<VoxelIndex>> pieces;
  for (std::size_t s = 0; s < voxels.size(); ++s) {
    if (seen[s]) continue;
    std::vector<VoxelIndex> piece;
    std::deque<std::size_t> queue{s};
    seen[s] = true;
    while (!queue.empty()) {
      const auto cur = voxels[queue.front()];
      queue.pop_front();
      piece.push_back(cur);
      for (std::int64_t dk = -1; dk <= 1; ++dk)
        for (std::int64_t dj = -1; dj <= 1; ++dj)
          for (std::int64_t di = -1; di <= 1; ++di) {
            const auto idx = find({cur.i + di, cur.j + dj, cur.k + dk});
            if (idx >= 0 && !seen[static_cast<std::size_t>(idx)]) {
              seen[static_cast<std::size_t>(idx)] = true;
              queue.push_back(static_cast<std::size_t>(idx));
            }
          }
    }
    std::sort(piece.begin(), piece.end());
    pieces.push_back(std::move(piece));
  }
  return pieces;
}

}  // namespace

Components connected_components(const BinaryMask& mask) {
  Components out{LabelVolume(mask.dims(), mask.spacing(), 0), 0};
  const auto& d = mask.dims();
  auto src = mask.data();
  auto lab = out.labels.data();
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < src.size(); ++s) {
    if (!src[s] || lab[s] != 0) continue;
    const auto label = ++out.count;
    lab[s] = label;
    queue.push_back(s);
    while (!queue.empty()) {
      const auto cur = mask.unravel(queue.front());
      queue.pop_front();
      for_each_neighbor26(cur, d, [&](const VoxelIndex& n) {
        const auto off = mask.linear(n);
        if (src[off] && lab[off] == 0) {
          lab[off] = label;
          queue.push_back(off);
        }
      });
    }
  }
  return out;
}

std::vector<std::vector<VoxelIndex>> component_voxels(const Components& components) {
  std::vector<std::vector<VoxelIndex>> out(components.count);
  auto lab = components.labels.data();
  for (std::size_t s = 0; s < lab.size(); ++s) {
    if (lab[s] != 0) out[lab[s] - 1].push_back(components.labels.unravel(s));
  }
  for (auto& c : out) std::sort(c.begin(), c.end());
  return out;
}

std::vector<FragmentCell> split_component(std::span<const VoxelIndex> component,
                                          const ProbabilityMap& prob, double radius_um) {
  if (component.empty()) return {};
  const auto& sp = prob.spacing();
  const double r2 = radius_um * radius_um;

  std::vector<std::size_t> order(component.size());
  for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const float pa = prob.at(component[a]);
    const float pb = prob.at(component[b]);
    if (pa != pb) return pa > pb;
    return component[a] < component[b];
  });

  std::vector<Vec3> pos(component.size());
  for (std::size_t n = 0; n < pos.size(); ++n) pos[n] = voxel_to_physical(component[n], sp);

  std::vector<bool> covered(component.size(), false);
  std::vector<std::size_t> centers;
  for (std::size_t idx : order) {
    if (covered[idx]) continue;
    centers.push_back(idx);
    for (std::size_t n = 0; n < pos.size(); ++n) {
      if (!covered[n] && (pos[n] - pos[idx]).norm_sq() <= r2) covered[n] = true;
    }
  }

  std::vector<std::vector<VoxelIndex>> cells(centers.size());
  for (std::size_t n = 0; n < pos.size(); ++n) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = (pos[n] - pos[centers[c]]).norm_sq();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    cells[best].push_back(component[n]);
  }

  std::vector<FragmentCell> out;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (cells[c].empty()) continue;
    for (auto& piece : connected_pieces(std::move(cells[c]))) {
      out.push_back({component[centers[c]], std::move(piece)});
    }
  }
  return out;
}

std::pair<Vec3, Vec3> estimate_endpoints(std::span<const VoxelIndex> voxels, const Spacing& spacing) {
  if (voxels.size() < 2) throw std::invalid_argument("endpoint estimation needs >= 2 voxels");
  std::vector<VoxelIndex> sorted(voxels.begin(), voxels.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<Vec3> pos(sorted.size());
  Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
          std::numeric_limits<double>::max()};
  Vec3 hi = -lo;
  for (std::size_t n = 0; n < sorted.size(); ++n) {
    pos[n] = voxel_to_physical(sorted[n], spacing);
    lo = {std::min(lo.x, pos[n].x), std::min(lo.y, pos[n].y), std::min(lo.z, pos[n].z)};
    hi = {std::max(hi.x, pos[n].x), std::max(hi.y, pos[n].y), std::max(hi.z, pos[n].z)};
  }
  const double radius = 0.5 * (hi - lo).norm();
  const double r2 = radius * radius;

  std::vector<std::size_t> neighbourhood(pos.size(), 0);
  for (std::size_t a = 0; a < pos.size(); ++a) {
    for (std::size_t b = a; b < pos.size(); ++b) {
      if ((pos[a] - pos[b]).norm_sq() <= r2) {
        ++neighbourhood[a];
        if (b != a) ++neighbourhood[b];
      }
    }
  }

  // Strict comparisons keep the lexicographically first voxel on ties.
  std::size_t first = 0;
  for (std::size_t n = 1; n < pos.size(); ++n) {
    if (neighbourhood[n] < neighbourhood[first]) first = n;
  }

  std::ptrdiff_t second = -1;
  for (std::size_t n = 0; n < pos.size(); ++n) {
    if ((pos[n] - pos[first]).norm_sq() <= r2) continue;
    if (second < 0 || neighbourhood[n] < neighbourhood[static_cast<std::size_t>(second)]) {
      second = static_cast<std::ptrdiff_t>(n);
    }
  }
  if (second < 0) {
    // Compact blob: nothing lies beyond R, take the farthest voxel instead.
    double best = -1.0;
    for (std::size_t n = 0; n < pos.size(); ++n) {
      const double d = (pos[n] - pos[first]).norm_sq();
      if (d > best) {
        best = d;
        second = static_cast<std::ptrdiff_t>(n);
      }
    }
  }
  return {pos[first], pos[static_cast<std::size_t>(second)]};
}

std::pair<Vec3, Vec3> estimate_tangents(const Vec3& x0, const Vec3& x1) {
  const Vec3 diff = x0 - x1;
  const double len = diff.norm();
  if (!(len > 0.0)) throw std::invalid_argument("tangent undefined for coincident endpoints");
  const Vec3 tau0 = diff / len;
  return {tau0, -tau0};
}

namespace {

// round(p / q) with halves away from zero; q > 0.
std::int64_t round_ratio(std::int64_t p, std::int64_t q) {
  const std::int64_t mag = (2 * (p < 0 ? -p : p) + q) / (2 * q);
  return p < 0 ? -mag : mag;
}

}  // namespace

std::vector<VoxelIndex> bresenham3d(const VoxelIndex& a, const VoxelIndex& b) {
  const std::int64_t delta[3] = {b.i - a.i, b.j - a.j, b.k - a.k};
  const std::int64_t start[3] = {a.i, a.j, a.k};
  int drive = 0;
  for (int axis = 1; axis < 3; ++axis) {
    if (std::llabs(delta[axis]) > std::llabs(delta[drive])) drive = axis;
  }
  const std::int64_t steps = std::llabs(delta[drive]);
  if (steps == 0) return {a};

  std::vector<VoxelIndex> line;
  line.reserve(static_cast<std::size_t>(steps + 1));
  for (std::int64_t m = 0; m <= steps; ++m) {
    std::int64_t c[3];
    for (int axis = 0; axis < 3; ++axis) c[axis] = start[axis] + round_ratio(delta[axis] * m, steps);
    line.push_back({c[0], c[1], c[2]});
  }
  return line;
}

FragmentSet generate_fragments(const ProbabilityMap& prob, const FragmentOptions& options) {
  FragmentSet set{prob.dims(), prob.spacing(), {}};
  const auto mask = threshold_probability(prob, options.threshold);
  const auto components = connected_components(mask);
  const std::size_t min_voxels = std::max<std::size_t>(options.min_voxels, 2);

  for (const auto& comp : component_voxels(components)) {
    for (auto& cell : split_component(comp, prob, options.radius_um)) {
      if (cell.voxels.size() < min_voxels) continue;
      Fragment f;
      f.id = static_cast<std::uint32_t>(set.fragments.size() + 1);
      f.center = cell.center;
      std::tie(f.x0, f.x1) = estimate_endpoints(cell.voxels, set.spacing);
      std::tie(f.tau0, f.tau1) = estimate_tangents(f.x0, f.x1);
      f.voxels = std::move(cell.voxels);
      set.fragments.push_back(std::move(f));
    }
  }
  return set;
}

LabelVolume fragment_label_volume(const FragmentSet& set) {
  LabelVolume labels(set.dims, set.spacing, 0);
  for (const auto& f : set.fragments) {
    for (const auto& v : f.voxels) labels.at(v) = f.id;
  }
  return labels;
}

namespace {

json vec_json(const Vec3& v) { return {v.x, v.y, v.z}; }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

fs::path table_path(const fs::path& stem) {
  auto p = stem;
  p += ".json";
  return p;
}

fs::path labels_stem(const fs::path& stem) {
  auto p = stem;
  p += "_labels";
  return p;
}

}  // namespace

void save_fragments(const FragmentSet& set, const fs::path& stem) {
  json frags = json::array();
  for (const auto& f : set.fragments) {
    frags.push_back({{"id", f.id},
                     {"x0", vec_json(f.x0)},
                     {"x1", vec_json(f.x1)},
                     {"tau0", vec_json(f.tau0)},
                     {"tau1", vec_json(f.tau1)},
                     {"n_voxels", f.voxels.size()},
                     {"center", {f.center.i, f.center.j, f.center.k}}});
  }
  const json doc{{"spacing", {set.spacing.sx, set.spacing.sy, set.spacing.sz}}, {"fragments", frags}};
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream out(table_path(stem));
  if (!out) throw IoError("cannot write " + table_path(stem).string());
  out << doc.dump() << '\n';
  save_label_volume(fragment_label_volume(set), labels_stem(stem));
}

FragmentSet load_fragments(const fs::path& stem) {
  std::ifstream in(table_path(stem));
  if (!in) throw IoError("cannot open fragment table " + table_path(stem).string());
  const auto labels = load_label_volume(labels_stem(stem));

  FragmentSet set{labels.dims(), labels.spacing(), {}};
  try {
    json doc;
    in >> doc;
    for (const auto& jf : doc.at("fragments")) {
      Fragment f;
      f.id = jf.at("id").get<std::uint32_t>();
      f.x0 = vec_from(jf.at("x0"));
      f.x1 = vec_from(jf.at("x1"));
      f.tau0 = vec_from(jf.at("tau0"));
      f.tau1 = vec_from(jf.at("tau1"));
      if (jf.contains("center")) {
        const auto& c = jf["center"];
        f.center = {c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>(), c.at(2).get<std::int64_t>()};
      }
      if (f.id != set.fragments.size() + 1) throw FormatError("fragment ids must be 1..N in order");
      set.fragments.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed fragment table: " + std::string(e.what()));
  }

  auto lab = labels.data();
  for (std::size_t s = 0; s < lab.size(); ++s) {
    if (lab[s] == 0) continue;
    if (lab[s] > set.fragments.size()) throw FormatError("label volume references unknown fragment");
    set.fragments[lab[s] - 1].voxels.push_back(labels.unravel(s));
  }
  for (auto& f : set.fragments) std::sort(f.voxels.begin(), f.voxels.end());
  return set;
}

}  // namespace axtrace
