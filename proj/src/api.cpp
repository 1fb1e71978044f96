#include "memore/api.hpp"

#include <sys/socket.h>

#include <deque>
#include <iostream>
#include <map>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace memore {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

struct Target {
  std::vector<std::string> path;
  std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  std::string_view path = target.substr(0, q);
  std::size_t pos = 0;
  while (pos < path.size()) {
    auto slash = path.find('/', pos);
    if (slash == std::string_view::npos) slash = path.size();
    if (slash > pos) t.path.emplace_back(path.substr(pos, slash - pos));
    pos = slash + 1;
  }
  if (q != std::string_view::npos) {
    std::string_view rest = target.substr(q + 1);
    while (!rest.empty()) {
      auto amp = rest.find('&');
      std::string_view kv = rest.substr(0, amp);
      auto eq = kv.find('=');
      t.query[std::string(kv.substr(0, eq))] =
          eq == std::string_view::npos ? "" : std::string(kv.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      rest = rest.substr(amp + 1);
    }
  }
  return t;
}

http::status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return http::status::not_found;
    case ErrorCode::SessionClosed:
    case ErrorCode::SessionStillOpen:
    case ErrorCode::NoOpenTag:
    case ErrorCode::DuplicateOpenTag: return http::status::conflict;
    case ErrorCode::InvalidArgument:
    case ErrorCode::IngestFormatError: return http::status::bad_request;
    default: return http::status::internal_server_error;
  }
}

json error_json(const std::string& code, const std::string& message) {
  return json{{"error", code}, {"message", message}};
}

Response reply(const Request& req, http::status status, std::string body,
               const std::string& content_type = "application/json") {
  Response res{status, req.version()};
  res.set(http::field::content_type, content_type);
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response reply_json(const Request& req, http::status status, const json& j) {
  return reply(req, status, j.dump(2) + "\n");
}

json body_json(const Request& req) {
  if (req.body().empty()) return json::object();
  try {
    json j = json::parse(req.body());
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be an object");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("invalid JSON body: ") + e.what());
  }
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::InvalidArgument, std::string(key) + " must be a string");
  return it->get<std::string>();
}

std::optional<double> opt_number(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(ErrorCode::InvalidArgument, std::string(key) + " must be a number");
  return it->get<double>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw Error(ErrorCode::InvalidArgument, "unknown field '" + k + "'");
    }
  }
}

/// Shared by the HTTP route and the socket command.
SessionEvent tag_from_json(SessionManager& sessions, const std::string& id, const json& j) {
  auto req_id = opt_string(j, "requirement_id");
  auto action_name = opt_string(j, "action");
  if (!req_id) throw Error(ErrorCode::InvalidArgument, "requirement_id is required");
  if (!action_name) throw Error(ErrorCode::InvalidArgument, "action is required");
  auto action = parse_tag_action(*action_name);
  if (!action) throw Error(ErrorCode::InvalidArgument, "action must be open or close");
  return sessions.tag(id, *req_id, *action, opt_number(j, "t"),
                      opt_string(j, "label").value_or(""));
}

/// One event-stream subscriber, driven by its own io_context.
class EventSocket : public std::enable_shared_from_this<EventSocket> {
 public:
  EventSocket(tcp::socket socket, SessionManager& sessions, std::shared_ptr<Session> session,
              std::uint64_t since, const std::atomic<bool>& stopping)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        sessions_(sessions),
        session_(std::move(session)),
        next_seq_(since),
        stopping_(stopping) {}

  void run(const Request& upgrade) {
    ws_.text(true);
    ws_.accept(upgrade);
    do_read();
    tick();
  }

 private:
  void tick() {
    if (stopping_ || closing_) {
      close();
      return;
    }
    for (auto& e : session_->events_since(next_seq_)) {
      next_seq_ = e.seq + 1;
      if (e.kind == EventKind::SessionEnded) ended_ = true;
      queue(event_line(e));
    }
    if (ended_ && outq_.empty() && !writing_) {
      close();
      return;
    }
    timer_.expires_after(std::chrono::milliseconds(50));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->tick();
    });
  }

  void queue(std::string msg) {
    outq_.push_back(std::move(msg));
    if (!writing_) write_next();
  }

  void write_next() {
    if (outq_.empty() || closing_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.async_write(net::buffer(outq_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->outq_.pop_front();
                      if (ec) {
                        self->closing_ = true;
                        self->writing_ = false;
                        return;
                      }
                      self->write_next();
                    });
  }

  void do_read() {
    ws_.async_read(rbuf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closing_ = true;
        self->timer_.cancel();
        return;
      }
      self->on_message(beast::buffers_to_string(self->rbuf_.data()));
      self->rbuf_.consume(self->rbuf_.size());
      self->do_read();
    });
  }

  void on_message(const std::string& text) {
    json cmd;
    try {
      cmd = json::parse(text);
      if (!cmd.is_object() || cmd.value("cmd", "") != "tag") {
        throw Error(ErrorCode::InvalidArgument, "only {\"cmd\":\"tag\"} commands are accepted");
      }
      json args = cmd;
      args.erase("cmd");
      reject_unknown(args, {"requirement_id", "action", "t", "label"});
      tag_from_json(sessions_, session_->id(), args);
    } catch (const Error& e) {
      queue(json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}, {"cmd", "tag"}}
                .dump());
    } catch (const json::exception& e) {
      queue(json{{"error", "InvalidArgument"}, {"message", e.what()}, {"cmd", "tag"}}.dump());
    }
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    ws_.async_close(websocket::close_code::normal,
                    [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<tcp::socket> ws_;
  net::steady_timer timer_;
  beast::flat_buffer rbuf_;
  SessionManager& sessions_;
  std::shared_ptr<Session> session_;
  std::uint64_t next_seq_;
  const std::atomic<bool>& stopping_;
  std::deque<std::string> outq_;
  bool writing_ = false;
  bool ended_ = false;
  bool closing_ = false;
  bool closed_ = false;
};

}  // namespace

struct ApiServer::Impl {
  explicit Impl(SessionManager& s) : sessions(s), acceptor(ioc) {}

  SessionManager& sessions;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex mu;
  std::vector<std::thread> connections;
  std::set<int> open_fds;

  void accept_loop() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec || stopping) return;
      const int fd = socket.release();
      {
        std::lock_guard lock(mu);
        open_fds.insert(fd);
        connections.emplace_back([this, fd] { serve(fd); });
      }
      accept_loop();
    });
  }

  void serve(int fd) {
    net::io_context conn_ioc;
    tcp::socket socket(conn_ioc);
    beast::error_code ec;
    socket.assign(tcp::v6(), fd, ec);
    if (ec) socket.assign(tcp::v4(), fd, ec);
    try {
      beast::flat_buffer buffer;
      while (!stopping) {
        Request req;
        http::read(socket, buffer, req, ec);
        if (ec) break;
        if (websocket::is_upgrade(req)) {
          upgrade(conn_ioc, std::move(socket), req);
          break;
        }
        Response res = handle(req);
        http::write(socket, res, ec);
        if (ec || !res.keep_alive()) break;
      }
    } catch (const std::exception& e) {
      std::cerr << "connection error: " << e.what() << "\n";
    }
    {
      std::lock_guard lock(mu);
      open_fds.erase(fd);
    }
    beast::error_code ignored;
    socket.shutdown(tcp::socket::shutdown_both, ignored);
    socket.close(ignored);
  }

  void upgrade(net::io_context& conn_ioc, tcp::socket socket, const Request& req) {
    const auto target = parse_target(std::string_view(req.target().data(), req.target().size()));
    std::shared_ptr<Session> session;
    std::uint64_t since = 0;
    try {
      if (target.path.size() != 4 || target.path[0] != "v1" || target.path[1] != "sessions" ||
          target.path[3] != "events") {
        throw Error(ErrorCode::InvalidArgument, "no WebSocket endpoint at this path");
      }
      session = sessions.get(target.path[2]);
      if (auto it = target.query.find("since"); it != target.query.end()) {
        since = std::stoull(it->second);
      }
    } catch (const std::exception& e) {
      auto* err = dynamic_cast<const Error*>(&e);
      const auto status = err ? status_for(err->code()) : http::status::bad_request;
      Response res = reply_json(req, status,
                                error_json(err ? std::string(to_string(err->code())) : "InvalidArgument",
                                           e.what()));
      res.keep_alive(false);
      beast::error_code ec;
      http::write(socket, res, ec);
      return;
    }
    auto conn = std::make_shared<EventSocket>(std::move(socket), sessions, session, since, stopping);
    conn->run(req);
    conn.reset();
    conn_ioc.run();
  }

  Response handle(const Request& req) {
    try {
      return route(req);
    } catch (const Error& e) {
      return reply_json(req, status_for(e.code()),
                        error_json(std::string(to_string(e.code())), e.what()));
    } catch (const std::exception& e) {
      return reply_json(req, http::status::internal_server_error, error_json("Internal", e.what()));
    }
  }

  Response route(const Request& req) {
    const auto t = parse_target(std::string_view(req.target().data(), req.target().size()));
    const auto& p = t.path;
    const auto method = req.method();
    auto not_found = [&] {
      return reply_json(req, http::status::not_found,
                        error_json("NotFound", "no route for " + std::string(req.target().data(), req.target().size())));
    };
    if (p.size() < 2 || p[0] != "v1") return not_found();
    if (p.size() == 2 && p[1] == "health" && method == http::verb::get) {
      return reply_json(req, http::status::ok, json{{"status", "ok"}});
    }
    if (p[1] != "sessions") return not_found();

    if (p.size() == 2) {
      if (method == http::verb::post) {
        json body = body_json(req);
        reject_unknown(body, {"name", "session_id"});
        const auto id = sessions.create(opt_string(body, "name").value_or(""),
                                        opt_string(body, "session_id"));
        return reply_json(req, http::status::created, json{{"session_id", id}});
      }
      if (method == http::verb::get) {
        json list = json::array();
        for (const auto& s : sessions.list()) list.push_back(to_json(s));
        return reply_json(req, http::status::ok, json{{"sessions", list}});
      }
      return not_found();
    }

    const std::string& id = p[2];
    if (p.size() == 3 && method == http::verb::get) {
      const auto st = sessions.get(id)->state();
      return reply_json(req, http::status::ok,
                        to_json(SessionSummary{st.session_id, st.name, st.created_at, st.ended(),
                                               st.captured.size()}));
    }
    if (p.size() != 4) return not_found();
    const std::string& action = p[3];

    if (action == "ingest" && method == http::verb::post) {
      json body = body_json(req);
      reject_unknown(body, {"frames", "fps", "audio", "transcript"});
      MediaSource src;
      if (auto v = opt_string(body, "frames")) src.frames_dir = *v;
      if (auto v = opt_number(body, "fps")) src.frames_fps = *v;
      if (auto v = opt_string(body, "audio")) src.audio = *v;
      if (auto v = opt_string(body, "transcript")) src.transcript = *v;
      sessions.ingest_background(id, src);
      return reply_json(req, http::status::accepted, json{{"status", "accepted"}});
    }
    if (action == "tags" && method == http::verb::post) {
      json body = body_json(req);
      reject_unknown(body, {"requirement_id", "action", "t", "label"});
      auto event = tag_from_json(sessions, id, body);
      return reply_json(req, http::status::created, to_json(event));
    }
    if (action == "stop" && method == http::verb::post) {
      sessions.stop(id);
      return reply_json(req, http::status::ok, json{{"status", "ended"}});
    }
    if (action == "report" && method == http::verb::get) {
      const auto it = t.query.find("format");
      const auto format = parse_report_format(it == t.query.end() ? "json" : it->second);
      if (!format) throw Error(ErrorCode::InvalidArgument, "format must be json or markdown");
      auto text = sessions.report(id, *format);
      return reply(req, http::status::ok, std::move(text),
                   *format == ReportFormat::Json ? "application/json"
                                                 : "text/markdown; charset=utf-8");
    }
    if (action == "events") {
      return reply_json(req, http::status::upgrade_required,
                        error_json("UpgradeRequired", "the event stream is a WebSocket"));
    }
    return not_found();
  }
};

ApiServer::ApiServer(SessionManager& sessions)
    : sessions_(sessions), impl_(std::make_unique<Impl>(sessions)) {}

ApiServer::~ApiServer() { stop(); }

void ApiServer::start(const std::string& host, unsigned short port) {
  beast::error_code ec;
  auto address = net::ip::make_address(host == "localhost" ? "127.0.0.1" : host, ec);
  if (ec) throw Error(ErrorCode::BindFailure, "bad bind address '" + host + "'");
  tcp::endpoint endpoint(address, port);
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(endpoint, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::BindFailure,
                "cannot bind " + host + ":" + std::to_string(port) + ": " + ec.message());
  }
  port_ = acc.local_endpoint().port();
  impl_->accept_loop();
  impl_->accept_thread = std::thread([this] { impl_->ioc.run(); });
}

void ApiServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
  });
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(impl_->mu);
    for (int fd : impl_->open_fds) ::shutdown(fd, SHUT_RDWR);
    threads.swap(impl_->connections);
  }
  for (auto& t : threads) t.join();
}

}  // namespace memore
