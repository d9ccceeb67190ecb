#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "axtrace/geometry.hpp"
#include "axtrace/solver.hpp"

namespace axtrace {

/// Subdivides every segment into ceil(len / step) equal pieces. Original
/// vertices and arc length are kept; a polyline shorter than `step` collapses
/// to its two endpoints.
Polyline resample_polyline(const Polyline& p, double step_um = 1.0);

double arc_length(const Polyline& p);

/// Discrete Frechet distance via the O(|P||Q|) coupling recurrence.
double frechet_discrete(const Polyline& p, const Polyline& q);

/// Mean over p of the distance to the nearest vertex of q.
double directed_divergence(const Polyline& p, const Polyline& q);
double spatial_distance(const Polyline& p, const Polyline& q);

struct Comparison {
  double frechet_um = 0.0;
  double sd_um = 0.0;
};

/// Both metrics after resampling both inputs at `step_um`.
Comparison compare_reconstructions(const Polyline& a, const Polyline& b, double step_um = 1.0);

// ---- SWC -----------------------------------------------------------------

constexpr int kSwcAxon = 2;

void write_swc(const Polyline& p, std::ostream& out, double radius_um = 1.0);
void export_swc(const Polyline& p, const std::filesystem::path& path, double radius_um = 1.0);

/// Reads an unbranched chain. Throws FormatError on malformed rows or any
/// parent other than the previous row.
Polyline read_swc(std::istream& in);
Polyline import_swc(const std::filesystem::path& path);

}  // namespace axtrace
