#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "axtrace/geometry.hpp"
#include "axtrace/volume.hpp"

namespace axtrace {

struct KdeOptions {
  // When set, a degenerate (zero-variance) sample set is accepted and the
  // bandwidth is clamped from below instead of raising.
  bool min_bandwidth_fallback = false;
  double min_bandwidth = 0.5;
};

/// One-dimensional Gaussian kernel density estimate.
class GaussianKde {
 public:
  GaussianKde() = default;

  /// Scott's rule: h = stddev * n^(-1/5), stddev with n-1 denominator.
  static GaussianKde fit(std::span<const double> samples, const KdeOptions& options = {});
  /// Rebuilds an estimator with a known bandwidth (e.g. loaded from JSON).
  static GaussianKde with_bandwidth(std::vector<double> samples, double bandwidth);

  double bandwidth() const { return bandwidth_; }
  std::span<const double> samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }

  /// (1/(n h)) * sum phi((x - x_i)/h). Kernels beyond 9 bandwidths are dropped.
  double density(double x) const;

  double min_sample() const { return samples_.front(); }
  double max_sample() const { return samples_.back(); }

 private:
  std::vector<double> samples_;  // sorted ascending
  double bandwidth_ = 0.0;
};

/// Trapezoid-rule mass of the estimate over the sample range widened by
/// `pad_bandwidths` on each side.
double kde_mass(const GaussianKde& kde, double pad_bandwidths = 6.0, std::size_t nodes = 20001);

enum class IntensityClass { foreground, background };

/// Foreground (alpha_1) and background (alpha_0) appearance densities.
class IntensityModel {
 public:
  static constexpr double kDefaultFloor = 1e-12;

  IntensityModel() = default;
  IntensityModel(GaussianKde fg, GaussianKde bg, double alpha_floor = kDefaultFloor);

  /// Fits both classes with Scott's rule and the min-bandwidth fallback engaged.
  static IntensityModel fit(std::span<const double> fg_samples, std::span<const double> bg_samples,
                            double alpha_floor = kDefaultFloor);

  const GaussianKde& foreground() const { return fg_; }
  const GaussianKde& background() const { return bg_; }
  double alpha_floor() const { return floor_; }

  /// Raw density clamped to [alpha_floor, 1].
  double eval_alpha(double intensity, IntensityClass cls) const;
  /// log(eval_alpha) for a 16-bit intensity, served from a lookup table.
  double log_alpha(std::uint16_t intensity, IntensityClass cls) const;

 private:
  void build_tables();

  GaussianKde fg_;
  GaussianKde bg_;
  double floor_ = kDefaultFloor;
  std::vector<double> log_fg_;
  std::vector<double> log_bg_;
};

double clamp_alpha(double raw_density, double alpha_floor);

/// Sum of log alpha over a voxel set. Throws std::out_of_range on any
/// voxel outside the volume.
double log_alpha_sum(const IntensityModel& model, const Volume& volume,
                     std::span<const VoxelIndex> voxels, IntensityClass cls);
inline double log_alpha1_sum(const IntensityModel& model, const Volume& volume,
                             std::span<const VoxelIndex> voxels) {
  return log_alpha_sum(model, volume, voxels, IntensityClass::foreground);
}

/// D(alpha_1 || alpha_0) in nats by trapezoid quadrature. Throws
/// std::invalid_argument when either class is unfitted.
double kl_divergence(const IntensityModel& model, std::size_t nodes = 20001);

// ---- autocorrelation -----------------------------------------------------

struct AutocorrBin {
  double lo = 0.0;
  double hi = 0.0;
  double center = 0.0;
  std::size_t n_pairs = 0;
  std::optional<double> rho;  // empty when n_pairs < 4
  std::optional<double> se;   // Fisher-z standard error 1/sqrt(n_pairs - 3)
};

struct AutocorrCurve {
  std::vector<AutocorrBin> bins;
};

/// Pearson correlation of intensities over all pairs of `n_samples` voxels
/// drawn uniformly without replacement from `class_mask`, binned by
/// physical distance.
AutocorrCurve autocorrelation(const Volume& volume, const BinaryMask& class_mask,
                              std::size_t n_samples, std::span<const double> bin_edges_um,
                              std::uint64_t seed);

// ---- serialization ---------------------------------------------------------

struct LabelSet {
  std::vector<VoxelIndex> fg;
  std::vector<VoxelIndex> bg;
};

LabelSet load_labels(const std::filesystem::path& path);
void save_labels(const LabelSet& labels, const std::filesystem::path& path);

/// Intensities of labelled voxels, in sidecar order.
std::vector<double> sample_intensities(const Volume& volume, std::span<const VoxelIndex> voxels);

nlohmann::json model_to_json(const IntensityModel& model);
IntensityModel model_from_json(const nlohmann::json& j);

}  // namespace axtrace
