#include "axtrace/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "axtrace/error.hpp"

namespace axtrace {

using nlohmann::json;

namespace {

constexpr double kKernelCutoff = 9.0;

double sample_stddev(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

template <typename F>
double trapezoid(F&& f, double lo, double hi, std::size_t nodes) {
  const double step = (hi - lo) / static_cast<double>(nodes - 1);
  double sum = 0.5 * (f(lo) + f(hi));
  for (std::size_t n = 1; n + 1 < nodes; ++n) sum += f(lo + step * static_cast<double>(n));
  return sum * step;
}

}  // namespace

GaussianKde GaussianKde::fit(std::span<const double> samples, const KdeOptions& options) {
  if (samples.size() < 2) throw std::invalid_argument("KDE needs at least 2 samples");
  const double sd = sample_stddev(samples);
  double h = sd * std::pow(static_cast<double>(samples.size()), -0.2);
  if (options.min_bandwidth_fallback) {
    h = std::max(h, options.min_bandwidth);
  } else if (!(h > 0.0)) {
    throw std::invalid_argument("KDE bandwidth is degenerate: all samples identical");
  }
  return with_bandwidth(std::vector<double>(samples.begin(), samples.end()), h);
}

GaussianKde GaussianKde::with_bandwidth(std::vector<double> samples, double bandwidth) {
  if (samples.empty()) throw std::invalid_argument("KDE needs at least one sample");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("KDE bandwidth must be positive");
  GaussianKde kde;
  std::sort(samples.begin(), samples.end());
  kde.samples_ = std::move(samples);
  kde.bandwidth_ = bandwidth;
  return kde;
}

double GaussianKde::density(double x) const {
  if (samples_.empty()) return 0.0;
  const double h = bandwidth_;
  const auto lo = std::lower_bound(samples_.begin(), samples_.end(), x - kKernelCutoff * h);
  const auto hi = std::upper_bound(lo, samples_.end(), x + kKernelCutoff * h);
  double sum = 0.0;
  for (auto it = lo; it != hi; ++it) {
    const double u = (x - *it) / h;
    sum += std::exp(-0.5 * u * u);
  }
  return sum * std::numbers::inv_sqrtpi / std::numbers::sqrt2 /
         (static_cast<double>(samples_.size()) * h);
}

double kde_mass(const GaussianKde& kde, double pad_bandwidths, std::size_t nodes) {
  const double pad = pad_bandwidths * kde.bandwidth();
  return trapezoid([&](double x) { return kde.density(x); }, kde.min_sample() - pad,
                   kde.max_sample() + pad, nodes);
}

double clamp_alpha(double raw_density, double alpha_floor) {
  return std::clamp(raw_density, alpha_floor, 1.0);
}

IntensityModel::IntensityModel(GaussianKde fg, GaussianKde bg, double alpha_floor)
    : fg_(std::move(fg)), bg_(std::move(bg)), floor_(alpha_floor) {
  if (!(alpha_floor > 0.0 && alpha_floor <= 1.0)) {
    throw std::invalid_argument("alpha floor must lie in (0, 1]");
  }
  build_tables();
}

IntensityModel IntensityModel::fit(std::span<const double> fg_samples,
                                   std::span<const double> bg_samples, double alpha_floor) {
  const KdeOptions opts{.min_bandwidth_fallback = true};
  return IntensityModel(GaussianKde::fit(fg_samples, opts), GaussianKde::fit(bg_samples, opts),
                        alpha_floor);
}

void IntensityModel::build_tables() {
  constexpr std::size_t kLevels = std::numeric_limits<std::uint16_t>::max() + 1;
  auto fill = [&](const GaussianKde& kde, std::vector<double>& table) {
    table.assign(kLevels, std::log(floor_));
    if (kde.empty()) return;
    const double reach = kKernelCutoff * kde.bandwidth();
    const auto first = static_cast<std::size_t>(std::clamp(
        std::floor(kde.min_sample() - reach), 0.0, static_cast<double>(kLevels - 1)));
    const auto last = static_cast<std::size_t>(std::clamp(
        std::ceil(kde.max_sample() + reach), 0.0, static_cast<double>(kLevels - 1)));
    for (std::size_t v = first; v <= last; ++v) {
      table[v] = std::log(clamp_alpha(kde.density(static_cast<double>(v)), floor_));
    }
  };
  fill(fg_, log_fg_);
  fill(bg_, log_bg_);
}

double IntensityModel::eval_alpha(double intensity, IntensityClass cls) const {
  const auto& kde = cls == IntensityClass::foreground ? fg_ : bg_;
  return clamp_alpha(kde.density(intensity), floor_);
}

double IntensityModel::log_alpha(std::uint16_t intensity, IntensityClass cls) const {
  return cls == IntensityClass::foreground ? log_fg_[intensity] : log_bg_[intensity];
}

double log_alpha_sum(const IntensityModel& model, const Volume& volume,
                     std::span<const VoxelIndex> voxels, IntensityClass cls) {
  double sum = 0.0;
  for (const auto& v : voxels) sum += model.log_alpha(volume.at(v), cls);
  return sum;
}

double kl_divergence(const IntensityModel& model, std::size_t nodes) {
  const auto& fg = model.foreground();
  const auto& bg = model.background();
  if (fg.empty() || bg.empty()) throw std::invalid_argument("KL divergence needs both classes fitted");
  const double pad = 6.0 * std::max(fg.bandwidth(), bg.bandwidth());
  const double lo = std::min(fg.min_sample(), bg.min_sample()) - pad;
  const double hi = std::max(fg.max_sample(), bg.max_sample()) + pad;
  // Keep several nodes per bandwidth so narrow kernels are resolved.
  const double finest = std::min(fg.bandwidth(), bg.bandwidth());
  const auto wanted = static_cast<std::size_t>(std::ceil((hi - lo) / (finest / 8.0))) + 1;
  nodes = std::clamp<std::size_t>(wanted, nodes, 400001);
  const double floor = model.alpha_floor();
  return trapezoid(
      [&](double x) {
        const double p = fg.density(x);
        if (p <= 0.0) return 0.0;
        const double q = std::max(bg.density(x), floor);
        return p * std::log(p / q);
      },
      lo, hi, nodes);
}

AutocorrCurve autocorrelation(const Volume& volume, const BinaryMask& class_mask,
                              std::size_t n_samples, std::span<const double> bin_edges_um,
                              std::uint64_t seed) {
  if (class_mask.dims() != volume.dims()) throw std::invalid_argument("mask dims differ from volume");
  if (n_samples < 2) throw std::invalid_argument("autocorrelation needs n_samples >= 2");
  if (bin_edges_um.size() < 2) throw std::invalid_argument("need at least two bin edges");
  if (!std::is_sorted(bin_edges_um.begin(), bin_edges_um.end())) {
    throw std::invalid_argument("bin edges must be ascending");
  }

  std::vector<std::size_t> members;
  auto mask = class_mask.data();
  for (std::size_t n = 0; n < mask.size(); ++n) {
    if (mask[n]) members.push_back(n);
  }
  if (members.size() < 2) throw std::invalid_argument("mask needs at least 2 voxels");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::sample(members.begin(), members.end(), std::back_inserter(chosen),
              std::min(n_samples, members.size()), rng);

  std::vector<Vec3> pos(chosen.size());
  std::vector<double> val(chosen.size());
  for (std::size_t n = 0; n < chosen.size(); ++n) {
    const auto v = volume.unravel(chosen[n]);
    pos[n] = voxel_to_physical(v, volume.spacing());
    val[n] = volume[v];
  }

  const std::size_t n_bins = bin_edges_um.size() - 1;
  struct Acc {
    std::size_t n = 0;
    double sum = 0, sum_sq = 0, cross = 0;
  };
  std::vector<Acc> acc(n_bins);
  for (std::size_t a = 0; a < pos.size(); ++a) {
    for (std::size_t b = a + 1; b < pos.size(); ++b) {
      const double d = distance(pos[a], pos[b]);
      const auto it = std::upper_bound(bin_edges_um.begin(), bin_edges_um.end(), d);
      if (it == bin_edges_um.begin() || it == bin_edges_um.end()) continue;
      auto& c = acc[static_cast<std::size_t>(it - bin_edges_um.begin()) - 1];
      ++c.n;
      c.sum += val[a] + val[b];
      c.sum_sq += val[a] * val[a] + val[b] * val[b];
      c.cross += val[a] * val[b];
    }
  }

  AutocorrCurve curve;
  curve.bins.reserve(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    AutocorrBin bin;
    bin.lo = bin_edges_um[b];
    bin.hi = bin_edges_um[b + 1];
    bin.center = 0.5 * (bin.lo + bin.hi);
    bin.n_pairs = acc[b].n;
    if (acc[b].n >= 4) {
      // Each pair enters as (a,b) and (b,a), so both margins share one mean.
      const double m = 2.0 * static_cast<double>(acc[b].n);
      const double mean = acc[b].sum / m;
      const double var = acc[b].sum_sq - m * mean * mean;
      const double cov = 2.0 * acc[b].cross - m * mean * mean;
      if (var > 0.0) {
        bin.rho = std::clamp(cov / var, -1.0, 1.0);
        bin.se = 1.0 / std::sqrt(static_cast<double>(acc[b].n) - 3.0);
      }
    }
    curve.bins.push_back(bin);
  }
  return curve;
}

namespace {

std::vector<VoxelIndex> parse_voxels(const json& arr) {
  std::vector<VoxelIndex> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_array() || v.size() != 3) throw FormatError("label voxel must be [i,j,k]");
    out.push_back({v[0].get<std::int64_t>(), v[1].get<std::int64_t>(), v[2].get<std::int64_t>()});
  }
  return out;
}

json voxels_to_json(std::span<const VoxelIndex> voxels) {
  json arr = json::array();
  for (const auto& v : voxels) arr.push_back({v.i, v.j, v.k});
  return arr;
}

}  // namespace

LabelSet load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label sidecar " + path.string());
  try {
    json j;
    in >> j;
    return {parse_voxels(j.at("fg")), parse_voxels(j.at("bg"))};
  } catch (const json::exception& e) {
    throw FormatError("malformed label sidecar " + path.string() + ": " + e.what());
  }
}

void save_labels(const LabelSet& labels, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json{{"fg", voxels_to_json(labels.fg)}, {"bg", voxels_to_json(labels.bg)}}.dump() << '\n';
}

std::vector<double> sample_intensities(const Volume& volume, std::span<const VoxelIndex> voxels) {
  std::vector<double> out;
  out.reserve(voxels.size());
  for (const auto& v : voxels) out.push_back(volume.at(v));
  return out;
}

json model_to_json(const IntensityModel& model) {
  const auto& fg = model.foreground();
  const auto& bg = model.background();
  return {{"fg_samples", std::vector<double>(fg.samples().begin(), fg.samples().end())},
          {"bg_samples", std::vector<double>(bg.samples().begin(), bg.samples().end())},
          {"h_fg", fg.bandwidth()},
          {"h_bg", bg.bandwidth()}};
}

IntensityModel model_from_json(const json& j) {
  try {
    auto fg = GaussianKde::with_bandwidth(j.at("fg_samples").get<std::vector<double>>(),
                                          j.at("h_fg").get<double>());
    auto bg = GaussianKde::with_bandwidth(j.at("bg_samples").get<std::vector<double>>(),
                                          j.at("h_bg").get<double>());
    return IntensityModel(std::move(fg), std::move(bg),
                          j.value("alpha_floor", IntensityModel::kDefaultFloor));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace axtrace
