#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "axtrace/phantom.hpp"
#include "axtrace/pipeline.hpp"
#include "axtrace/service.hpp"

using namespace axtrace;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "axtrace_cli";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const std::string& args) {
  const auto out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = std::string(AXTRACE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write_spec(const fs::path& path, bool island) {
  PhantomSpec spec;
  spec.dims = {64, 64, 60};
  spec.polyline = {{3.0, 9.6, 5.0}, {16.0, 9.6, 35.0}};
  spec.label_samples = 800;
  if (island) spec.island = std::make_pair(Vec3{2.0, 18.0, 55.0}, Vec3{6.0, 18.0, 55.0});
  std::ofstream(path) << phantom_spec_to_json(spec).dump();
}

}  // namespace

TEST_CASE("full pipeline through the command line") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  write_spec(kWork / "spec.json", true);
  const auto ph = kWork / "ph";
  const auto cfg = (ph / "pipeline.json").string();

  REQUIRE(run("--out " + ph.string() + " phantom --spec " + (kWork / "spec.json").string()).code == 0);
  REQUIRE(fs::exists(cfg));
  REQUIRE(run("--config " + cfg + " kde").code == 0);
  const auto model1 = slurp(ph / "out" / "model.json");
  CHECK(json::parse(model1).contains("h_fg"));
  REQUIRE(run("--config " + cfg + " fragments").code == 0);
  const auto frags1 = slurp(ph / "out" / "fragments.json");

  SUBCASE("outputs are byte-identical on rerun") {
    REQUIRE(run("--config " + cfg + " kde").code == 0);
    REQUIRE(run("--config " + cfg + " fragments").code == 0);
    CHECK(slurp(ph / "out" / "model.json") == model1);
    CHECK(slurp(ph / "out" / "fragments.json") == frags1);
  }

  SUBCASE("trace by location, compare against truth, and match the service") {
    const auto meta = json::parse(slurp(ph / "phantom.json"));
    auto coords = [](const json& p) {
      return std::to_string(p[0].get<double>()) + " " + std::to_string(p[1].get<double>()) + " " +
             std::to_string(p[2].get<double>());
    };
    const auto t = run("--config " + cfg + " trace --start-near " + coords(meta["start_um"]) + " --end-near " +
                       coords(meta["end_um"]));
    REQUIRE(t.code == 0);
    CHECK(fs::exists(ph / "out" / "trace.swc"));
    const auto trace = json::parse(slurp(ph / "out" / "trace.json"));
    CHECK(trace == json::parse(t.out));

    const auto cmp = run("compare " + (ph / "out" / "trace.swc").string() + " " + (ph / "truth.swc").string());
    REQUIRE(cmp.code == 0);
    const auto c = json::parse(cmp.out);
    CHECK(c.at("sd_um").get<double>() < 3.0);
    CHECK(c.at("frechet_um").get<double>() < 5.0);

    const auto self = json::parse(run("compare " + (ph / "truth.swc").string() + " " + (ph / "truth.swc").string()).out);
    CHECK(self.at("frechet_um") == 0.0);
    CHECK(self.at("sd_um") == 0.0);

    // Same request through the HTTP layer yields the same trace.
    const auto session = std::make_shared<const Session>(Session::load(load_config(cfg)));
    TraceService svc(session);
    const auto first = trace.at("states").front().get<StateId>();
    const auto last = trace.at("states").back().get<StateId>();
    const json body{{"start_fragment", first / 2 + 1},
                    {"start_orientation", first % 2 ? "reversed" : "forward"},
                    {"end_fragment", last / 2 + 1},
                    {"end_orientation", last % 2 ? "reversed" : "forward"}};
    auto reply = json::parse(svc.handle("POST", "/trace", {}, body.dump()).body);
    reply.erase("id");
    reply.erase("name");
    CHECK(reply == trace);

    const auto explicit_ids = run("--config " + cfg + " trace --start " + std::to_string(first / 2 + 1) +
                                  " --start-orientation " + body["start_orientation"].get<std::string>() + " --end " +
                                  std::to_string(last / 2 + 1) + " --end-orientation " +
                                  body["end_orientation"].get<std::string>());
    REQUIRE(explicit_ids.code == 0);
    CHECK(json::parse(explicit_ids.out) == trace);
  }

  SUBCASE("unreachable end has its own exit code") {
    const auto r = run("--config " + cfg + " trace --start-near 3 9.6 5 --end-near 4 18 55");
    CHECK(r.code == 3);
    CHECK(json::parse(r.err).at("error") == "no_path");
  }
}

TEST_CASE("usage and I/O failures") {
  fs::create_directories(kWork);
  const auto none = run("");
  CHECK(none.code == 1);
  CHECK(json::parse(none.err).contains("error"));
  CHECK(run("kde").code == 1);
  CHECK(run("--config /nonexistent/pipeline.json kde").code == 2);
  CHECK(run("compare /nonexistent/a.swc /nonexistent/b.swc").code == 2);
  std::ofstream(kWork / "broken.json") << "{";
  CHECK(run("--config " + (kWork / "broken.json").string() + " kde").code == 2);
  CHECK(run("--help").code == 0);
}
