#include "axtrace/service.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "axtrace/metrics.hpp"
#include "axtrace/png.hpp"

namespace axtrace {

using nlohmann::json;

namespace {

HttpReply json_reply(int status, const json& j) { return {status, "application/json", j.dump()}; }
HttpReply error_reply(int status, const std::string& message) {
  return json_reply(status, {{"error", message}, {"status", status}});
}

Axis axis_param(const std::map<std::string, std::string>& query) {
  auto it = query.find("axis");
  return parse_axis(it == query.end() ? "z" : it->second);
}

std::pair<double, double> project_point(const Vec3& p, const Spacing& sp, Axis axis) {
  const double c[3] = {p.x / sp.sx, p.y / sp.sy, p.z / sp.sz};
  switch (axis) {
    case Axis::x: return {c[1], c[2]};
    case Axis::y: return {c[0], c[2]};
    case Axis::z: return {c[0], c[1]};
  }
  return {0, 0};
}

std::vector<std::uint8_t> to_grey(const Image2D<std::uint16_t>& img) {
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double lo = *lo_it;
  const double span = std::max(1.0, static_cast<double>(*hi_it) - lo);
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = static_cast<std::uint8_t>(std::lround(255.0 * (img.pixels[n] - lo) / span));
  }
  return out;
}

std::optional<int> parse_trace_id(const std::string& text) {
  try {
    std::size_t used = 0;
    const int id = std::stoi(text, &used);
    if (used != text.size()) return std::nullopt;
    return id;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::array<std::uint8_t, 3> fragment_color(std::uint32_t id) {
  // Golden-ratio hue walk at full saturation.
  const double hue = std::fmod(static_cast<double>(id) * 0.6180339887498949, 1.0) * 6.0;
  const double f = hue - std::floor(hue);
  const auto q = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - f)));
  const auto t = static_cast<std::uint8_t>(std::lround(255.0 * f));
  switch (static_cast<int>(hue)) {
    case 0: return {255, t, 0};
    case 1: return {q, 255, 0};
    case 2: return {0, 255, t};
    case 3: return {0, q, 255};
    case 4: return {t, 0, 255};
    default: return {255, 0, q};
  }
}

TraceRequest trace_request_from_json(const json& j) {
  TraceRequest r;
  r.start_fragment = j.at("start_fragment").get<std::uint32_t>();
  r.end_fragment = j.at("end_fragment").get<std::uint32_t>();
  r.start_orientation = parse_orientation(j.value("start_orientation", std::string("forward")));
  r.end_orientation = parse_orientation(j.value("end_orientation", std::string("forward")));
  return r;
}

struct TraceService::Transport {
  httplib::Server server;
  std::thread thread;
};

TraceService::TraceService(std::shared_ptr<const Session> session)
    : session_(std::move(session)), transport_(std::make_unique<Transport>()) {
  std::random_device rd;
  std::ostringstream id;
  id << std::hex << rd() << rd();
  session_id_ = id.str();
  auto& srv = transport_->server;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto reply = handle(req.method, req.path, query, req.body);
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  srv.Get(R"(/.*)", forward);
  srv.Post(R"(/.*)", forward);
  srv.Delete(R"(/.*)", forward);
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

TraceService::~TraceService() { stop(); }

int TraceService::start(const std::string& host, int port) {
  auto& srv = transport_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  transport_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void TraceService::run(const std::string& host, int port) {
  if (!transport_->server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void TraceService::stop() {
  if (!transport_) return;
  transport_->server.stop();
  if (transport_->thread.joinable()) transport_->thread.join();
}

HttpReply TraceService::handle(const std::string& method, const std::string& path,
                               const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    if (method == "GET" && path == "/session/info") return info();
    if (method == "GET" && path == "/mip") return mip_png(query);
    if (method == "GET" && path == "/fragments") return fragments_json(query);
    if (method == "GET" && path == "/fragments.png") return fragments_png(query);
    if (method == "POST" && path == "/trace") return post_trace(body);
    if (method == "GET" && path == "/traces") return list_traces();
    if (method == "POST" && path == "/pick") return pick(body);
    const std::string prefix = "/trace/";
    if (path.rfind(prefix, 0) == 0) {
      std::string rest = path.substr(prefix.size());
      const bool swc = rest.size() > 4 && rest.ends_with("/swc");
      if (swc) rest.resize(rest.size() - 4);
      const auto id = parse_trace_id(rest);
      if (!id) return error_reply(400, "malformed trace id");
      if (method == "DELETE" && !swc) return delete_trace(*id);
      if (method == "GET" && swc) return trace_swc(*id);
    }
    return error_reply(404, "no route for " + method + " " + path);
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed request: ") + e.what());
  } catch (const UnknownFragment& e) {
    return error_reply(404, e.what());
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

HttpReply TraceService::info() const {
  const auto& v = session_->volume();
  const auto& d = v.dims();
  const auto& s = v.spacing();
  return json_reply(200, {{"session_id", session_id_},
                          {"dims", {d.nx, d.ny, d.nz}},
                          {"spacing", {s.sx, s.sy, s.sz}},
                          {"fragment_count", session_->fragments().fragments.size()},
                          {"state_count", session_->graph().states.size()},
                          {"edge_count", session_->graph().edge_count()},
                          {"hyperparams", hyperparams_to_json(session_->hyper())}});
}

HttpReply TraceService::mip_png(const std::map<std::string, std::string>& query) const {
  const auto img = mip(session_->volume(), axis_param(query));
  return {200, "image/png", encode_png(img.width, img.height, 1, to_grey(img))};
}

HttpReply TraceService::fragments_json(const std::map<std::string, std::string>& query) const {
  const Axis axis = axis_param(query);
  const auto& sp = session_->fragments().spacing;
  const auto [w, h] = projected_extent(session_->volume().dims(), axis);
  json frags = json::array();
  for (const auto& f : session_->fragments().fragments) {
    const auto [tu, tv] = project_point(f.x0, sp, axis);
    const auto [hu, hv] = project_point(f.x1, sp, axis);
    const auto c = fragment_color(f.id);
    frags.push_back({{"id", f.id},
                     {"color", {c[0], c[1], c[2]}},
                     {"tail_px", {tu, tv}},
                     {"head_px", {hu, hv}},
                     {"n_voxels", f.voxels.size()}});
  }
  return json_reply(200, {{"axis", axis_name(axis)}, {"width", w}, {"height", h}, {"fragments", frags}});
}

HttpReply TraceService::fragments_png(const std::map<std::string, std::string>& query) const {
  const Axis axis = axis_param(query);
  const auto img = mip(session_->volume(), axis);
  const auto grey = to_grey(img);
  std::vector<std::uint8_t> rgb(grey.size() * 3);
  for (std::size_t n = 0; n < grey.size(); ++n) rgb[3 * n] = rgb[3 * n + 1] = rgb[3 * n + 2] = grey[n];
  // Highest id wins where projections overlap, so the colouring is stable.
  std::vector<std::uint32_t> top(grey.size(), 0);
  for (const auto& f : session_->fragments().fragments) {
    for (const auto& v : f.voxels) {
      const auto [u, vv] = project_index(v, axis);
      auto& slot = top[static_cast<std::size_t>(u + img.width * vv)];
      slot = std::max(slot, f.id);
    }
  }
  for (std::size_t n = 0; n < top.size(); ++n) {
    if (top[n] == 0) continue;
    const auto c = fragment_color(top[n]);
    for (int ch = 0; ch < 3; ++ch) rgb[3 * n + ch] = static_cast<std::uint8_t>((rgb[3 * n + ch] + 3 * c[ch]) / 4);
  }
  return {200, "image/png", encode_png(img.width, img.height, 3, rgb)};
}

HttpReply TraceService::post_trace(const std::string& body) {
  const json j = json::parse(body);
  const auto request = trace_request_from_json(j);
  const auto path = session_->trace(request);
  if (!path) {
    return error_reply(409, "no path from fragment " + std::to_string(request.start_fragment) + " to fragment " +
                                std::to_string(request.end_fragment));
  }
  std::lock_guard lock(traces_mutex_);
  StoredTrace stored{next_id_++, j.value("name", std::string()), request, *path};
  if (stored.name.empty()) stored.name = "trace " + std::to_string(stored.id);
  auto out = trace_to_json(stored.path);
  out["id"] = stored.id;
  out["name"] = stored.name;
  traces_.emplace(stored.id, std::move(stored));
  return json_reply(200, out);
}

HttpReply TraceService::list_traces() const {
  std::lock_guard lock(traces_mutex_);
  json arr = json::array();
  for (const auto& [id, t] : traces_) {
    auto j = trace_to_json(t.path);
    j["id"] = id;
    j["name"] = t.name;
    arr.push_back(std::move(j));
  }
  return json_reply(200, {{"traces", arr}});
}

HttpReply TraceService::trace_swc(int id) const {
  std::lock_guard lock(traces_mutex_);
  auto it = traces_.find(id);
  if (it == traces_.end()) return error_reply(404, "unknown trace id " + std::to_string(id));
  std::ostringstream out;
  write_swc(it->second.path.polyline, out);
  return {200, "text/plain", out.str()};
}

HttpReply TraceService::delete_trace(int id) {
  std::lock_guard lock(traces_mutex_);
  if (traces_.erase(id) == 0) return error_reply(404, "unknown trace id " + std::to_string(id));
  return json_reply(200, {{"deleted", id}});
}

HttpReply TraceService::pick(const std::string& body) const {
  const json j = json::parse(body);
  const double x = j.at("x_px").get<double>();
  const double y = j.at("y_px").get<double>();
  const Axis axis = parse_axis(j.value("axis", std::string("z")));
  const double radius = j.value("radius_px", kDefaultPickRadiusPx);
  const auto& sp = session_->fragments().spacing;

  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& f : session_->fragments().fragments) {
    for (const auto& end : {f.x0, f.x1}) {
      const auto [u, v] = project_point(end, sp, axis);
      const double d = std::hypot(u - x, v - y);
      if (d < best_d) {  // strict: earlier (smaller) id keeps ties
        best_d = d;
        best = f.id;
      }
    }
  }
  if (best == 0 || best_d > radius) return error_reply(404, "no fragment within " + std::to_string(radius) + " px");
  return json_reply(200, {{"fragment_id", best}, {"distance_px", best_d}});
}

}  // namespace axtrace
