#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "memore/session.hpp"

namespace memore {

/// HTTP + WebSocket front end over a SessionManager.
///
///   POST /v1/sessions                      {"name", "session_id"?}
///   GET  /v1/sessions
///   GET  /v1/sessions/{id}
///   POST /v1/sessions/{id}/ingest          {"frames"?, "fps"?, "audio"?, "transcript"?}
///   POST /v1/sessions/{id}/tags            {"requirement_id", "action", "t"?, "label"?}
///   POST /v1/sessions/{id}/stop
///   GET  /v1/sessions/{id}/report?format=json|markdown
///   GET  /v1/sessions/{id}/events?since=N  WebSocket upgrade
///   GET  /v1/health
///
/// The event socket sends every event from `since` on in log order, one
/// JSON text message each, and closes after SessionEnded. Clients may send
/// {"cmd":"tag","requirement_id","action","t"?,"label"?}; a rejected
/// command is answered with {"error", "message", "cmd"}.
class ApiServer {
 public:
  explicit ApiServer(SessionManager& sessions);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port. Throws
  /// BindFailure.
  void start(const std::string& host, unsigned short port);
  unsigned short port() const noexcept { return port_; }
  /// Stops accepting, closes open connections and joins their threads.
  void stop();

 private:
  struct Impl;
  SessionManager& sessions_;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
};

}  // namespace memore
