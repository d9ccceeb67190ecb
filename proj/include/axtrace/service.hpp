#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "json.hpp"

#include "axtrace/pipeline.hpp"

namespace axtrace {

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// HTTP JSON API over one loaded session.
///
///   GET    /session/info
///   GET    /mip?axis=z                  PNG
///   GET    /fragments?axis=z            projected endpoints + colours (JSON)
///   GET    /fragments.png?axis=z        MIP with fragment overlay (PNG)
///   POST   /trace                       {start_fragment, start_orientation, end_fragment, end_orientation, name?}
///   GET    /traces
///   GET    /trace/{id}/swc
///   DELETE /trace/{id}
///   POST   /pick                        {x_px, y_px, axis, radius_px?}
class TraceService {
 public:
  static constexpr double kDefaultPickRadiusPx = 10.0;

  explicit TraceService(std::shared_ptr<const Session> session);
  ~TraceService();
  TraceService(const TraceService&) = delete;
  TraceService& operator=(const TraceService&) = delete;

  /// Transport-independent dispatch; safe to call concurrently.
  HttpReply handle(const std::string& method, const std::string& path,
                   const std::map<std::string, std::string>& query, const std::string& body);

  /// Binds (port 0 picks a free port), serves on a background thread and
  /// returns the bound port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  const std::string& session_id() const { return session_id_; }

 private:
  struct StoredTrace {
    int id = 0;
    std::string name;
    TraceRequest request;
    TracePath path;
  };

  HttpReply info() const;
  HttpReply mip_png(const std::map<std::string, std::string>& query) const;
  HttpReply fragments_json(const std::map<std::string, std::string>& query) const;
  HttpReply fragments_png(const std::map<std::string, std::string>& query) const;
  HttpReply post_trace(const std::string& body);
  HttpReply list_traces() const;
  HttpReply trace_swc(int id) const;
  HttpReply delete_trace(int id);
  HttpReply pick(const std::string& body) const;

  std::shared_ptr<const Session> session_;
  std::string session_id_;
  mutable std::mutex traces_mutex_;
  std::map<int, StoredTrace> traces_;
  int next_id_ = 1;

  struct Transport;
  std::unique_ptr<Transport> transport_;
};

/// Stable display colour for a fragment id.
std::array<std::uint8_t, 3> fragment_color(std::uint32_t id);

/// Request body accepted by POST /trace (and by the CLI).
TraceRequest trace_request_from_json(const nlohmann::json& j);

}  // namespace axtrace
