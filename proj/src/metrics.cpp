#include "axtrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "axtrace/error.hpp"

namespace axtrace {

namespace {

void require_nonempty(const Polyline& p, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty polyline");
}

}  // namespace

double arc_length(const Polyline& p) {
  double len = 0.0;
  for (std::size_t n = 1; n < p.size(); ++n) len += distance(p[n - 1], p[n]);
  return len;
}

Polyline resample_polyline(const Polyline& p, double step_um) {
  if (!(step_um > 0.0)) throw std::invalid_argument("resample step must be positive");
  if (p.size() < 2) return p;
  if (arc_length(p) < step_um) return {p.front(), p.back()};

  Polyline out{p.front()};
  for (std::size_t n = 1; n < p.size(); ++n) {
    const Vec3 a = p[n - 1];
    const Vec3 b = p[n];
    const double len = distance(a, b);
    if (len == 0.0) continue;
    const auto pieces = static_cast<std::size_t>(std::ceil(len / step_um - 1e-12));
    for (std::size_t m = 1; m <= pieces; ++m) {
      const double t = static_cast<double>(m) / static_cast<double>(pieces);
      out.push_back(m == pieces ? b : a + (b - a) * t);
    }
  }
  return out;
}

double frechet_discrete(const Polyline& p, const Polyline& q) {
  require_nonempty(p, "frechet");
  require_nonempty(q, "frechet");
  const std::size_t m = q.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = distance(p[i], q[j]);
      double reach;
      if (i == 0 && j == 0) {
        reach = 0.0;
      } else if (i == 0) {
        reach = cur[j - 1];
      } else if (j == 0) {
        reach = prev[0];
      } else {
        reach = std::min({prev[j], cur[j - 1], prev[j - 1]});
      }
      cur[j] = std::max(d, reach);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

double directed_divergence(const Polyline& p, const Polyline& q) {
  require_nonempty(p, "directed divergence");
  require_nonempty(q, "directed divergence");
  double total = 0.0;
  for (const auto& a : p) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : q) best = std::min(best, (a - b).norm_sq());
    total += std::sqrt(best);
  }
  return total / static_cast<double>(p.size());
}

double spatial_distance(const Polyline& p, const Polyline& q) {
  return 0.5 * (directed_divergence(p, q) + directed_divergence(q, p));
}

Comparison compare_reconstructions(const Polyline& a, const Polyline& b, double step_um) {
  const auto ra = resample_polyline(a, step_um);
  const auto rb = resample_polyline(b, step_um);
  return {frechet_discrete(ra, rb), spatial_distance(ra, rb)};
}

void write_swc(const Polyline& p, std::ostream& out, double radius_um) {
  require_nonempty(p, "swc export");
  out << "# id type x y z radius parent\n";
  out << std::setprecision(17);
  for (std::size_t n = 0; n < p.size(); ++n) {
    const long id = static_cast<long>(n) + 1;
    const long parent = n == 0 ? -1 : id - 1;
    out << id << ' ' << kSwcAxon << ' ' << p[n].x << ' ' << p[n].y << ' ' << p[n].z << ' ' << radius_um << ' '
        << parent << '\n';
  }
}

void export_swc(const Polyline& p, const std::filesystem::path& path, double radius_um) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_swc(p, out, radius_um);
}

Polyline read_swc(std::istream& in) {
  Polyline out;
  std::string line;
  long prev_id = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    long id = 0, type = 0, parent = 0;
    double x = 0, y = 0, z = 0, r = 0;
    if (!(row >> id)) continue;  // blank or comment-only
    if (!(row >> type >> x >> y >> z >> r >> parent)) {
      throw FormatError("malformed SWC row at line " + std::to_string(line_no));
    }
    std::string extra;
    if (row >> extra) throw FormatError("trailing fields in SWC row at line " + std::to_string(line_no));
    const long expected_parent = out.empty() ? -1 : prev_id;
    if (parent != expected_parent) {
      throw FormatError("SWC row at line " + std::to_string(line_no) + " is not a simple chain");
    }
    prev_id = id;
    out.push_back({x, y, z});
  }
  if (out.empty()) throw FormatError("SWC file has no nodes");
  return out;
}

Polyline import_swc(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_swc(in);
}

}  // namespace axtrace
