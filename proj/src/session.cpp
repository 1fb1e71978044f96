#include "memore/session.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <iostream>
#include <random>
#include <sstream>

#include "memore/media.hpp"

namespace memore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kEventNames[] = {
    "SessionStarted",    "SegmentCaptured", "SegmentScored", "ScoringFailed",
    "RequirementTagged", "AlertRaised",     "SessionEnded",
};

[[noreturn]] void corrupt(const SessionEvent& e, const std::string& what) {
  throw Error(ErrorCode::IoError,
              "event " + std::to_string(e.seq) + " (" + std::string(to_string(e.kind)) + "): " + what);
}

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_';
  });
}

std::string generate_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return std::string("s-") + std::string(buf, 12);
}

json segmenter_json(const SegmenterConfig& c) {
  return json{{"mode", std::string(to_string(c.mode))},
              {"length_s", round_sig9(c.length_s)},
              {"min_tail_s", round_sig9(c.min_tail_s)},
              {"target_fps", round_sig9(c.target_fps)},
              {"pause_threshold_s", round_sig9(c.pause_threshold_s)},
              {"max_segment_s", round_sig9(c.max_segment_s)}};
}

SegmenterConfig segmenter_from_json(const json& j) {
  SegmenterConfig c;
  auto mode = parse_segmentation_mode(j.at("mode").get<std::string>());
  if (!mode) throw Error(ErrorCode::IoError, "bad segmentation mode in log");
  c.mode = *mode;
  c.length_s = j.at("length_s").get<double>();
  c.min_tail_s = j.at("min_tail_s").get<double>();
  c.target_fps = j.at("target_fps").get<double>();
  c.pause_threshold_s = j.at("pause_threshold_s").get<double>();
  c.max_segment_s = j.at("max_segment_s").get<double>();
  return c;
}

ValenceMap valence_from_json(const json& j) {
  std::array<double, kEmotionCount> w{};
  for (auto label : kAllEmotions) w[index_of(label)] = j.at(std::string(to_string(label))).get<double>();
  return ValenceMap::from_weights(w);
}

/// PNG dimensions straight from the IHDR chunk.
std::pair<int, int> png_size(const std::vector<std::uint8_t>& b, const fs::path& path) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (b.size() < 24 || !std::equal(sig, sig + 8, b.begin()) ||
      std::string(b.begin() + 12, b.begin() + 16) != "IHDR") {
    throw Error(ErrorCode::IngestFormatError, path.string() + ": not a PNG file");
  }
  auto be32 = [&](std::size_t o) {
    return static_cast<int>((std::uint32_t{b[o]} << 24) | (std::uint32_t{b[o + 1]} << 16) |
                            (std::uint32_t{b[o + 2]} << 8) | std::uint32_t{b[o + 3]});
  };
  return {be32(16), be32(20)};
}

std::vector<std::uint8_t> read_input(const fs::path& path) {
  try {
    return read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::IngestFormatError, e.what());
  }
}

}  // namespace

std::string_view to_string(EventKind k) noexcept { return kEventNames[static_cast<std::size_t>(k)]; }

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
  for (std::size_t i = 0; i < std::size(kEventNames); ++i) {
    if (kEventNames[i] == s) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

json to_json(const SessionEvent& e) {
  return json{{"seq", e.seq}, {"ts", e.ts}, {"kind", std::string(to_string(e.kind))},
              {"payload", e.payload}};
}

SessionEvent session_event_from_json(const json& j) {
  if (!j.is_object() || j.size() != 4 || !j.contains("seq") || !j.contains("ts") ||
      !j.contains("kind") || !j.contains("payload")) {
    throw Error(ErrorCode::IoError, "event must have exactly seq, ts, kind and payload");
  }
  SessionEvent e;
  if (!j["seq"].is_number_unsigned()) throw Error(ErrorCode::IoError, "event seq must be an integer");
  e.seq = j["seq"].get<std::uint64_t>();
  if (!j["ts"].is_string()) throw Error(ErrorCode::IoError, "event ts must be a string");
  e.ts = j["ts"].get<std::string>();
  auto kind = j["kind"].is_string() ? parse_event_kind(j["kind"].get<std::string>()) : std::nullopt;
  if (!kind) throw Error(ErrorCode::IoError, "unknown event kind " + j["kind"].dump());
  e.kind = *kind;
  if (!j["payload"].is_object()) throw Error(ErrorCode::IoError, "event payload must be an object");
  e.payload = j["payload"];
  return e;
}

std::string event_line(const SessionEvent& e) { return to_json(e).dump(); }

std::string format_utc(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000 - (ms % 1000 < 0 ? 1 : 0));
  const int frac = static_cast<int>(((ms % 1000) + 1000) % 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
  return buf;
}

std::optional<TagAction> parse_tag_action(std::string_view s) noexcept {
  if (s == "open") return TagAction::Open;
  if (s == "close") return TagAction::Close;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SessionState

std::vector<std::uint64_t> SessionState::dangling() const {
  std::vector<std::uint64_t> out;
  for (const auto& [id, _] : captured) {
    if (!scores.count(id) && !failures.count(id)) out.push_back(id);
  }
  return out;
}

const RequirementTag* SessionState::open_tag(const std::string& requirement_id) const {
  for (const auto& t : tags) {
    if (t.requirement_id == requirement_id && !t.t_end) return &t;
  }
  return nullptr;
}

void SessionState::apply(const SessionEvent& e) {
  if (e.seq != next_seq) corrupt(e, "expected seq " + std::to_string(next_seq));
  if ((e.seq == 0) != (e.kind == EventKind::SessionStarted)) {
    corrupt(e, "SessionStarted must be the first event and only the first");
  }
  if (ended()) corrupt(e, "event after SessionEnded");
  const json& p = e.payload;
  try {
    switch (e.kind) {
      case EventKind::SessionStarted:
        session_id = p.at("session_id").get<std::string>();
        name = p.at("name").get<std::string>();
        created_at = e.ts;
        segmenter = segmenter_from_json(p.at("segmenter"));
        valence = valence_from_json(p.at("valence_map"));
        alerts.window_n = p.at("alert_window").get<std::size_t>();
        alerts.threshold = p.at("alert_threshold").get<double>();
        priority.evidence_discount = p.at("evidence_discount").get<bool>();
        break;
      case EventKind::SegmentCaptured: {
        auto seg = media_segment_from_json(p);
        if (seg.segment_id != next_segment_id()) corrupt(e, "segment ids must be consecutive");
        media_end = std::max(media_end, seg.t_end);
        captured.emplace(seg.segment_id, std::move(seg));
        break;
      }
      case EventKind::SegmentScored: {
        auto s = segment_score_from_json(p);
        if (!captured.count(s.segment_id)) corrupt(e, "score for an uncaptured segment");
        if (scores.count(s.segment_id) || failures.count(s.segment_id)) {
          corrupt(e, "second terminal event for a segment");
        }
        scores.emplace(s.segment_id, std::move(s));
        break;
      }
      case EventKind::ScoringFailed: {
        auto f = scoring_failure_from_json(p);
        if (!captured.count(f.segment_id)) corrupt(e, "failure for an uncaptured segment");
        if (scores.count(f.segment_id) || failures.count(f.segment_id)) {
          corrupt(e, "second terminal event for a segment");
        }
        failures.emplace(f.segment_id, std::move(f));
        break;
      }
      case EventKind::RequirementTagged: {
        const auto id = p.at("requirement_id").get<std::string>();
        const double t = p.at("t").get<double>();
        auto action = parse_tag_action(p.at("action").get<std::string>());
        if (!action) corrupt(e, "bad tag action");
        if (*action == TagAction::Open) {
          if (open_tag(id)) corrupt(e, "tag already open");
          tags.push_back(RequirementTag{id, p.value("label", std::string()), t, std::nullopt});
        } else {
          auto it = std::find_if(tags.begin(), tags.end(), [&](const RequirementTag& tag) {
            return tag.requirement_id == id && !tag.t_end;
          });
          if (it == tags.end()) corrupt(e, "close without an open tag");
          it->t_end = t;
        }
        break;
      }
      case EventKind::AlertRaised:
        raised.push_back(alert_from_json(p));
        break;
      case EventKind::SessionEnded:
        if (!dangling().empty()) corrupt(e, "session ended with unscored segments");
        for (const auto& t : tags) {
          if (!t.t_end) corrupt(e, "session ended with an open tag");
        }
        ended_at = e.ts;
        break;
    }
  } catch (const json::exception& ex) {
    corrupt(e, ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::IoError) throw;
    corrupt(e, ex.what());
  }
  ++next_seq;
}

ReportInput SessionState::report_input() const {
  ReportInput in;
  in.session_id = session_id;
  in.name = name;
  in.created_at = created_at;
  in.ended_at = ended_at.value_or("");
  in.segment_length_s = segmenter.length_s;
  in.segmentation_mode = segmenter.mode;
  in.duration_s = media_end;
  for (const auto& [_, s] : scores) in.scores.push_back(s);
  for (const auto& [_, f] : failures) in.failures.push_back(f);
  in.tags = tags;
  std::vector<RequirementTag> closed;
  for (const auto& t : tags) {
    if (t.t_end) closed.push_back(t);
  }
  in.records = link(in.scores, closed, valence);
  in.ranking = prioritize(in.records, valence, priority);
  in.alerts = detect_alerts(session_id, in.scores, valence, alerts);
  in.valence = valence;
  return in;
}

SessionState replay(const std::vector<SessionEvent>& events) {
  SessionState s;
  for (const auto& e : events) s.apply(e);
  return s;
}

std::vector<SessionEvent> read_event_log(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<SessionEvent> events;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final write
    ++line_no;
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      events.push_back(session_event_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::IoError,
                  path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(ErrorCode::IoError,
                  path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Media loading

LoadedMedia load_media(const MediaSource& source) {
  if (!source.frames_dir && !source.audio && !source.transcript) {
    throw Error(ErrorCode::IngestFormatError, "no media given");
  }
  LoadedMedia m;
  if (source.frames_dir) {
    if (!(source.frames_fps > 0.0)) throw Error(ErrorCode::IngestFormatError, "frame rate must be > 0");
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(*source.frames_dir, ec)) {
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    }
    if (ec) {
      throw Error(ErrorCode::IngestFormatError,
                  source.frames_dir->string() + ": " + ec.message());
    }
    if (files.empty()) {
      throw Error(ErrorCode::IngestFormatError, source.frames_dir->string() + ": no .png frames");
    }
    std::sort(files.begin(), files.end());
    for (std::size_t i = 0; i < files.size(); ++i) {
      auto bytes = std::make_shared<std::vector<std::uint8_t>>(read_input(files[i]));
      auto [w, h] = png_size(*bytes, files[i]);
      m.frames.push_back(TimedFrame{static_cast<double>(i) / source.frames_fps, bytes, w, h});
    }
    m.duration_s = std::max(m.duration_s, static_cast<double>(files.size()) / source.frames_fps);
  }
  if (source.audio) {
    PcmAudio pcm = decode_wav(read_input(*source.audio));
    if (!is_supported_sample_rate(pcm.sample_rate)) {
      throw Error(ErrorCode::IngestFormatError,
                  source.audio->string() + ": unsupported sample rate " +
                      std::to_string(pcm.sample_rate));
    }
    AudioBlock block{0.0, pcm.sample_rate, std::move(pcm.samples)};
    m.duration_s = std::max(m.duration_s, block.t_end());
    m.audio.push_back(std::move(block));
  }
  if (source.transcript) {
    auto bytes = read_input(*source.transcript);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      auto fail = [&](const std::string& what) {
        return Error(ErrorCode::IngestFormatError, source.transcript->string() + ":" +
                                                       std::to_string(line_no) + ": " + what);
      };
      if (t2 == std::string::npos) throw fail("expected t_start<TAB>t_end<TAB>text");
      TranscriptSpan span;
      try {
        std::size_t used = 0;
        span.t_start = std::stod(line.substr(0, t1), &used);
        if (used != t1) throw std::invalid_argument("t_start");
        span.t_end = std::stod(line.substr(t1 + 1, t2 - t1 - 1), &used);
        if (used != t2 - t1 - 1) throw std::invalid_argument("t_end");
      } catch (const std::exception&) {
        throw fail("bad timestamp");
      }
      if (span.t_start < 0.0 || span.t_end < span.t_start) throw fail("bad time span");
      if (!m.transcript.empty() && span.t_start < m.transcript.back().t_start) {
        throw fail("spans must be in time order");
      }
      span.text = line.substr(t2 + 1);
      m.duration_s = std::max(m.duration_s, span.t_end);
      m.transcript.push_back(std::move(span));
    }
    if (m.transcript.empty()) {
      throw Error(ErrorCode::IngestFormatError, source.transcript->string() + ": empty transcript");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Session

Session::Session(fs::path log_path, Clock clock, std::vector<SessionEvent> events)
    : log_path_(std::move(log_path)), clock_(std::move(clock)) {
  for (auto& e : events) {
    state_.apply(e);
    events_.push_back(std::move(e));
  }
  log_.open(log_path_, std::ios::binary | std::ios::app);
  if (!log_) throw Error(ErrorCode::StorageUnwritable, "cannot open " + log_path_.string());
}

std::string Session::id() const {
  std::lock_guard lock(mu_);
  return state_.session_id;
}

SessionState Session::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<SessionEvent> Session::events_since(std::uint64_t seq) const {
  std::lock_guard lock(mu_);
  if (seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

bool Session::wait_for(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [&] { return events_.size() > seq; });
}

SessionEvent Session::append(EventKind kind, json payload) {
  std::lock_guard lock(mu_);
  SessionEvent e{state_.next_seq, format_utc(clock_()), kind, std::move(payload)};
  const std::string line = event_line(e);
  // Fold the decoded line so live state is exactly what a replay sees.
  SessionEvent stored = session_event_from_json(json::parse(line));
  SessionState next = state_;
  next.apply(stored);
  log_ << line << '\n';
  log_.flush();
  if (!log_) throw Error(ErrorCode::StorageUnwritable, "cannot append to " + log_path_.string());
  state_ = std::move(next);
  events_.push_back(stored);
  cv_.notify_all();
  return stored;
}

void Session::add_pending() {
  std::lock_guard lock(pending_mu_);
  ++pending_;
}

void Session::finish_pending() {
  {
    std::lock_guard lock(pending_mu_);
    --pending_;
  }
  pending_cv_.notify_all();
}

void Session::wait_no_pending() {
  std::unique_lock lock(pending_mu_);
  pending_cv_.wait(lock, [&] { return pending_ == 0; });
}

json to_json(const SessionSummary& s) {
  return json{{"session_id", s.session_id},
              {"name", s.name},
              {"created_at", s.created_at},
              {"state", s.ended ? "ended" : "open"},
              {"segments", s.segments}};
}

// ---------------------------------------------------------------------------
// SessionManager

SessionManager::SessionManager(ServiceConfig config, Clock clock,
                               std::shared_ptr<ServerRegistry> registry)
    : config_(std::move(config)), clock_(std::move(clock)), store_(config_.storage_dir) {
  config_.validate();
  std::error_code ec;
  fs::create_directories(config_.storage_dir, ec);
  const fs::path probe = config_.storage_dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (ec || !out) {
      throw Error(ErrorCode::StorageUnwritable,
                  "storage dir " + config_.storage_dir.string() + " is not writable");
    }
  }
  fs::remove(probe, ec);
  registry_ = registry ? std::move(registry) : build_registry(config_, store_);
  restore();
}

SessionManager::~SessionManager() { wait_idle(); }

void SessionManager::restore() {
  std::error_code ec;
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(config_.storage_dir, ec)) {
    const fs::path log = entry.path() / "events.jsonl";
    if (entry.is_directory() && fs::exists(log)) logs.push_back(log);
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) {
    auto events = read_event_log(log);
    if (events.empty()) continue;
    auto session = std::make_shared<Session>(log, clock_, std::move(events));
    const auto state = session->state();
    for (auto id : state.dangling()) {
      ScoringFailure f;
      f.segment_id = id;
      f.reason = ErrorCode::ScoringFailed;
      f.message = "scoring interrupted by a service restart";
      session->append(EventKind::ScoringFailed, to_json(f));
    }
    sessions_.emplace(state.session_id, std::move(session));
  }
}

std::string SessionManager::create(const std::string& name, std::optional<std::string> id) {
  std::lock_guard lock(mu_);
  std::string sid = id.value_or("");
  if (sid.empty()) {
    do {
      sid = generate_id();
    } while (sessions_.count(sid));
  } else if (!valid_session_id(sid)) {
    throw Error(ErrorCode::InvalidArgument,
                "session id must be 1-64 characters of letters, digits, '-' or '_'");
  } else if (sessions_.count(sid) || fs::exists(config_.storage_dir / sid)) {
    throw Error(ErrorCode::InvalidArgument, "session '" + sid + "' already exists");
  }
  std::error_code ec;
  fs::create_directories(config_.storage_dir / sid, ec);
  if (ec) throw Error(ErrorCode::StorageUnwritable, ec.message());
  auto session = std::make_shared<Session>(config_.storage_dir / sid / "events.jsonl", clock_,
                                           std::vector<SessionEvent>{});
  const auto& a = config_.analytics;
  session->append(EventKind::SessionStarted,
                  json{{"session_id", sid},
                       {"name", name},
                       {"segment_length_s", round_sig9(config_.segmenter.length_s)},
                       {"segmentation_mode", std::string(to_string(config_.segmenter.mode))},
                       {"segmenter", segmenter_json(config_.segmenter)},
                       {"valence_map", to_json(a.valence)},
                       {"alert_window", a.alerts.window_n},
                       {"alert_threshold", round_sig9(a.alerts.threshold)},
                       {"evidence_discount", a.priority.evidence_discount}});
  sessions_.emplace(sid, std::move(session));
  return sid;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
  return it->second;
}

std::shared_ptr<Session> SessionManager::open_session(const std::string& id) const {
  auto s = get(id);
  if (s->state().ended()) throw Error(ErrorCode::SessionClosed, "session '" + id + "' has ended");
  return s;
}

void SessionManager::ingest(const std::string& id, const MediaSource& source) {
  open_session(id);
  ingest(id, load_media(source));
}

void SessionManager::ingest(const std::string& id, const LoadedMedia& media) {
  auto session = open_session(id);
  std::lock_guard ingest_lock(session->ingest_mutex());
  const auto state = session->state();
  if (state.ended()) throw Error(ErrorCode::SessionClosed, "session '" + id + "' has ended");

  const double origin = state.media_end;
  const double end = origin + media.duration_s;
  Segmenter segmenter(state.segmenter, id, store_, state.next_segment_id(), origin);
  for (const auto& f : media.frames) {
    TimedFrame shifted = f;
    shifted.t += origin;
    segmenter.push(std::move(shifted));
  }
  for (const auto& b : media.audio) {
    AudioBlock shifted = b;
    shifted.t_start += origin;
    segmenter.push(std::move(shifted));
  }
  for (const auto& s : media.transcript) {
    segmenter.push(TranscriptSpan{s.t_start + origin, s.t_end + origin, s.text});
  }

  const ValenceMap valence = state.valence;
  const AlertOptions alert_opts = state.alerts;
  std::vector<SegmentScore> scored;
  for (const auto& [_, s] : state.scores) scored.push_back(s);
  std::set<std::uint64_t> alerted;
  for (const auto& a : state.raised) alerted.insert(a.first_segment);

  auto sink = [&](const MediaSegment&, const Outcome& outcome) {
    if (const auto* score = std::get_if<SegmentScore>(&outcome)) {
      session->append(EventKind::SegmentScored, to_json(*score));
      scored.push_back(*score);
      for (const auto& alert : detect_alerts(id, scored, valence, alert_opts)) {
        if (alerted.insert(alert.first_segment).second) {
          session->append(EventKind::AlertRaised, to_json(alert));
        }
      }
    } else {
      session->append(EventKind::ScoringFailed, to_json(std::get<ScoringFailure>(outcome)));
    }
  };

  ScoringPipeline pipeline(registry_, config_.router.policy, config_.fusion,
                           config_.router.pipeline, sink, state.next_segment_id());
  auto submit = [&](std::vector<MediaSegment> segments) {
    for (auto& seg : segments) {
      session->append(EventKind::SegmentCaptured, to_json(seg));
      pipeline.submit(std::move(seg));
    }
  };
  // Feed the segmenter as a live stream would arrive, one window at a time.
  const double step = state.segmenter.length_s;
  for (double horizon = origin + step; horizon <= end; horizon += step) {
    submit(segmenter.poll(horizon));
  }
  submit(segmenter.finish(end));
  pipeline.drain();
}

void SessionManager::ingest_background(const std::string& id, const MediaSource& source) {
  auto session = open_session(id);
  auto media = std::make_shared<LoadedMedia>(load_media(source));
  session->add_pending();
  std::lock_guard lock(mu_);
  background_.emplace_back([this, id, media, session] {
    try {
      ingest(id, *media);
    } catch (const std::exception& e) {
      std::cerr << "ingest into " << id << " failed: " << e.what() << "\n";
    }
    session->finish_pending();
  });
}

void SessionManager::wait_idle() {
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    threads.swap(background_);
  }
  for (auto& t : threads) t.join();
}

SessionEvent SessionManager::tag(const std::string& id, const std::string& requirement_id,
                                 TagAction action, std::optional<double> t,
                                 const std::string& label) {
  validate_requirement_id(requirement_id);
  auto session = open_session(id);
  const auto state = session->state();
  const double when = t.value_or(state.media_end);
  if (!std::isfinite(when) || when < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "tag time must be a finite number >= 0");
  }
  const RequirementTag* open = state.open_tag(requirement_id);
  json payload{{"requirement_id", requirement_id}, {"t", round_sig9(when)}};
  if (action == TagAction::Open) {
    if (open) {
      throw Error(ErrorCode::DuplicateOpenTag,
                  "requirement '" + requirement_id + "' already has an open tag");
    }
    payload["action"] = "open";
    payload["label"] = label;
  } else {
    if (!open) {
      throw Error(ErrorCode::NoOpenTag, "requirement '" + requirement_id + "' has no open tag");
    }
    if (!(round_sig9(when) > open->t_start)) {
      throw Error(ErrorCode::InvalidArgument, "tag must close after it opened");
    }
    payload["action"] = "close";
  }
  return session->append(EventKind::RequirementTagged, std::move(payload));
}

void SessionManager::stop(const std::string& id) {
  auto session = open_session(id);
  session->wait_no_pending();
  std::lock_guard ingest_lock(session->ingest_mutex());
  const auto state = session->state();
  if (state.ended()) throw Error(ErrorCode::SessionClosed, "session '" + id + "' has ended");
  for (const auto& tag : state.tags) {
    if (tag.t_end) continue;
    // A tag opened at or after the media end closes where it opened.
    const double t = std::max(state.media_end, tag.t_start);
    session->append(EventKind::RequirementTagged, json{{"requirement_id", tag.requirement_id},
                                                       {"action", "close"},
                                                       {"t", round_sig9(t)},
                                                       {"auto", true}});
  }
  session->append(EventKind::SessionEnded, json{{"t_end", round_sig9(state.media_end)}});
}

std::string SessionManager::report(const std::string& id, ReportFormat format) const {
  const auto state = get(id)->state();
  if (!state.ended()) {
    throw Error(ErrorCode::SessionStillOpen, "session '" + id + "' has not ended");
  }
  return render_report(state.report_input(), format);
}

std::vector<SessionSummary> SessionManager::list() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionSummary> out;
  for (const auto& s : all) {
    const auto st = s->state();
    out.push_back({st.session_id, st.name, st.created_at, st.ended(), st.captured.size()});
  }
  return out;
}

std::string report_from_log(const fs::path& log_path, ReportFormat format) {
  const auto state = replay(read_event_log(log_path));
  if (!state.ended()) {
    throw Error(ErrorCode::SessionStillOpen, "session '" + state.session_id + "' has not ended");
  }
  return render_report(state.report_input(), format);
}

}  // namespace memore
