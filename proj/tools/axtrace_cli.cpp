#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "axtrace/error.hpp"
#include "axtrace/metrics.hpp"
#include "axtrace/phantom.hpp"
#include "axtrace/pipeline.hpp"
#include "axtrace/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace axtrace;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNoPath = 3 };

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

PipelineConfig resolve_config(const Globals& g) {
  if (g.config.empty()) throw std::invalid_argument("--config is required for this subcommand");
  auto c = load_config(g.config);
  if (!g.out.empty()) c.out_dir = g.out;
  if (g.seed) c.seed = *g.seed;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

Vec3 parse_point(const std::vector<double>& v) {
  if (v.size() != 3) throw std::invalid_argument("points take three coordinates (um)");
  return {v[0], v[1], v[2]};
}

// Orientation whose tail x0 lies nearest `p`.
Orientation orientation_from(const Fragment& f, const Vec3& p, bool tail) {
  const bool forward_closer = distance(tail ? f.x0 : f.x1, p) <= distance(tail ? f.x1 : f.x0, p);
  return forward_closer ? Orientation::forward : Orientation::reversed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Most-probable-path axon tracing over segmentation fragments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config JSON");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory (overrides config out_dir)");

  auto* kde = app.add_subcommand("kde", "Fit foreground/background intensity KDEs; writes <out>/model.json");
  auto* frag = app.add_subcommand("fragments", "Threshold, split and write fragments to <out>/fragments*");

  auto* trace = app.add_subcommand("trace", "Most probable path between two fragment states");
  std::uint32_t start_id = 0, end_id = 0;
  std::string start_or = "forward", end_or = "forward";
  std::vector<double> start_near, end_near;
  trace->add_option("--start", start_id, "Start fragment id");
  trace->add_option("--end", end_id, "End fragment id");
  trace->add_option("--start-orientation", start_or, "forward|reversed")->check(CLI::IsMember({"forward", "reversed"}));
  trace->add_option("--end-orientation", end_or, "forward|reversed")->check(CLI::IsMember({"forward", "reversed"}));
  trace->add_option("--start-near", start_near, "Pick start fragment and orientation nearest x y z (um)")->expected(3);
  trace->add_option("--end-near", end_near, "Pick end fragment and orientation nearest x y z (um)")->expected(3);

  auto* compare = app.add_subcommand("compare", "Frechet and SD between two SWC chains");
  std::string swc_a, swc_b;
  double step = 1.0;
  compare->add_option("a", swc_a, "First SWC")->required();
  compare->add_option("b", swc_b, "Second SWC")->required();
  compare->add_option("--step", step, "Resampling step (um)");

  auto* phantom = app.add_subcommand("phantom", "Write a synthetic tube phantom with ground truth");
  std::string spec_path;
  phantom->add_option("--spec", spec_path, "Phantom spec JSON (defaults: helix, 256^3)");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API for a processed config");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "TCP port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (*kde) {
      const auto c = resolve_config(g);
      run_kde(c);
      std::cout << model_path(c).string() << '\n';
    } else if (*frag) {
      const auto c = resolve_config(g);
      const auto set = run_fragments(c);
      std::cout << json{{"fragments", set.fragments.size()}, {"stem", fragments_stem(c).string()}}.dump() << '\n';
    } else if (*trace) {
      const auto c = resolve_config(g);
      const auto session = Session::load(c);
      TraceRequest r{start_id, parse_orientation(start_or), end_id, parse_orientation(end_or)};
      if (!start_near.empty()) {
        const auto p = parse_point(start_near);
        r.start_fragment = session.nearest_fragment(p);
        r.start_orientation = orientation_from(session.fragments().fragments[r.start_fragment - 1], p, true);
      }
      if (!end_near.empty()) {
        const auto p = parse_point(end_near);
        r.end_fragment = session.nearest_fragment(p);
        r.end_orientation = orientation_from(session.fragments().fragments[r.end_fragment - 1], p, false);
      }
      const auto path = session.trace(r);
      if (!path) {
        return fail(kNoPath, "no_path",
                    "no path from fragment " + std::to_string(r.start_fragment) + " to " + std::to_string(r.end_fragment));
      }
      const auto j = trace_to_json(*path);
      write_text(c.out_dir / "trace.json", j.dump() + "\n");
      export_swc(path->polyline, c.out_dir / "trace.swc", c.swc_radius_um);
      std::cout << j.dump() << '\n';
    } else if (*compare) {
      const auto cmp = compare_reconstructions(import_swc(swc_a), import_swc(swc_b), step);
      std::cout << json{{"frechet_um", cmp.frechet_um}, {"sd_um", cmp.sd_um}}.dump() << '\n';
    } else if (*phantom) {
      if (g.out.empty()) throw std::invalid_argument("phantom requires --out <dir>");
      PhantomSpec spec;
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw IoError("cannot open " + spec_path);
        json j;
        try {
          in >> j;
        } catch (const json::exception& e) {
          throw FormatError(std::string("malformed phantom spec: ") + e.what());
        }
        spec = phantom_spec_from_json(j);
      }
      if (g.seed) spec.seed = *g.seed;
      write_phantom(make_phantom(spec), spec, g.out);
      std::cout << (fs::path(g.out) / "pipeline.json").string() << '\n';
    } else if (*serve) {
      const auto c = resolve_config(g);
      TraceService service(std::make_shared<const Session>(Session::load(c)));
      std::cerr << "serving on http://" << host << ':' << port << '\n';
      service.run(host, port);
    }
  } catch (const IoError& e) {
    return fail(kIo, "io", e.what());
  } catch (const FormatError& e) {
    return fail(kIo, "format", e.what());
  } catch (const UnknownFragment& e) {
    return fail(kUsage, "unknown_fragment", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const std::exception& e) {
    return fail(kIo, "error", e.what());
  }
  return kOk;
}
