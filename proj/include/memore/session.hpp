#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "memore/analytics.hpp"
#include "memore/config.hpp"

namespace memore {

enum class EventKind {
  SessionStarted,
  SegmentCaptured,
  SegmentScored,
  ScoringFailed,
  RequirementTagged,
  AlertRaised,
  SessionEnded,
};

std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

struct SessionEvent {
  std::uint64_t seq = 0;
  /// UTC, ISO 8601 with milliseconds.
  std::string ts;
  EventKind kind = EventKind::SessionStarted;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const SessionEvent& e);
SessionEvent session_event_from_json(const nlohmann::json& j);
/// One compact JSON line without the newline.
std::string event_line(const SessionEvent& e);

std::string format_utc(std::chrono::system_clock::time_point t);

enum class TagAction { Open, Close };
std::optional<TagAction> parse_tag_action(std::string_view s) noexcept;

/// Everything derived from a session's events. Built only by folding
/// events, so a live session and a cold replay agree exactly.
struct SessionState {
  std::string session_id;
  std::string name;
  std::string created_at;
  std::optional<std::string> ended_at;
  SegmenterConfig segmenter;
  ValenceMap valence;
  AlertOptions alerts;
  PriorityOptions priority;

  std::map<std::uint64_t, MediaSegment> captured;
  std::map<std::uint64_t, SegmentScore> scores;
  std::map<std::uint64_t, ScoringFailure> failures;
  /// In open order; open tags have no t_end.
  std::vector<RequirementTag> tags;
  std::vector<Alert> raised;
  /// End of the captured media timeline.
  double media_end = 0.0;
  std::uint64_t next_seq = 0;

  bool ended() const noexcept { return ended_at.has_value(); }
  std::uint64_t next_segment_id() const noexcept {
    return captured.empty() ? 0 : captured.rbegin()->first + 1;
  }
  /// Captured segments still waiting for a terminal event.
  std::vector<std::uint64_t> dangling() const;
  const RequirementTag* open_tag(const std::string& requirement_id) const;

  /// Throws IoError when the event does not fit the state (gap in seq,
  /// event after SessionEnded, unknown segment, ...).
  void apply(const SessionEvent& e);

  ReportInput report_input() const;
};

SessionState replay(const std::vector<SessionEvent>& events);

/// Reads events.jsonl. A final line without its newline (an interrupted
/// write) is ignored; any other malformed line throws IoError.
std::vector<SessionEvent> read_event_log(const std::filesystem::path& path);

/// File-based media for one ingest call. Frame files are *.png sorted by
/// name, one every 1/frames_fps seconds. Transcript lines are
/// "t_start<TAB>t_end<TAB>text" relative to the start of the ingest.
struct MediaSource {
  std::optional<std::filesystem::path> frames_dir;
  double frames_fps = 24.0;
  std::optional<std::filesystem::path> audio;
  std::optional<std::filesystem::path> transcript;
};

struct LoadedMedia {
  std::vector<TimedFrame> frames;
  std::vector<AudioBlock> audio;
  std::vector<TranscriptSpan> transcript;
  /// Length of the loaded media, from 0.
  double duration_s = 0.0;
};

/// Throws IngestFormatError for unreadable or malformed media and when the
/// source names nothing.
LoadedMedia load_media(const MediaSource& source);

/// One session: the event log writer plus the derived state.
class Session {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  Session(std::filesystem::path log_path, Clock clock, std::vector<SessionEvent> events);

  std::string id() const;
  SessionState state() const;
  std::vector<SessionEvent> events_since(std::uint64_t seq) const;
  /// Waits until an event with seq >= `seq` exists or the timeout passes.
  bool wait_for(std::uint64_t seq, std::chrono::milliseconds timeout) const;

  /// Appends one event; returns it as stored.
  SessionEvent append(EventKind kind, nlohmann::json payload);

  /// Serializes whole ingests and stop against each other.
  std::mutex& ingest_mutex() { return ingest_mu_; }

  /// Background ingests accepted but not yet finished; stop waits for them.
  void add_pending();
  void finish_pending();
  void wait_no_pending();

 private:
  std::filesystem::path log_path_;
  Clock clock_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::ofstream log_;
  std::vector<SessionEvent> events_;
  SessionState state_;
  std::mutex ingest_mu_;
  std::mutex pending_mu_;
  std::condition_variable pending_cv_;
  std::size_t pending_ = 0;
};

struct SessionSummary {
  std::string session_id;
  std::string name;
  std::string created_at;
  bool ended = false;
  std::size_t segments = 0;
};

nlohmann::json to_json(const SessionSummary& s);

/// All sessions under storage_dir. Restores every session from its log on
/// construction; a restored session with captured but unscored segments
/// gets a ScoringFailed event for each.
class SessionManager {
 public:
  using Clock = Session::Clock;

  explicit SessionManager(ServiceConfig config,
                          Clock clock = [] { return std::chrono::system_clock::now(); },
                          std::shared_ptr<ServerRegistry> registry = nullptr);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }
  const ClipStore& store() const noexcept { return store_; }
  std::shared_ptr<ServerRegistry> registry() const noexcept { return registry_; }

  /// Ids are 1-64 characters of [A-Za-z0-9_-]; a fresh one is generated
  /// when none is given. Throws InvalidArgument for a taken or bad id.
  std::string create(const std::string& name, std::optional<std::string> id = std::nullopt);

  /// Segments, scores and analyzes the media synchronously. The media
  /// continues the session timeline from where the previous ingest ended.
  void ingest(const std::string& id, const MediaSource& source);
  void ingest(const std::string& id, const LoadedMedia& media);
  /// Validates the media now, then ingests on a background thread.
  void ingest_background(const std::string& id, const MediaSource& source);
  /// Joins every background ingest.
  void wait_idle();

  /// `t` defaults to the current end of the media timeline.
  SessionEvent tag(const std::string& id, const std::string& requirement_id, TagAction action,
                   std::optional<double> t = std::nullopt, const std::string& label = "");

  /// Waits for running ingests, closes open tags at the media end and
  /// appends SessionEnded. Throws SessionClosed when already ended.
  void stop(const std::string& id);

  /// Throws SessionStillOpen until the session has ended.
  std::string report(const std::string& id, ReportFormat format) const;

  std::vector<SessionSummary> list() const;
  /// Throws UnknownSession.
  std::shared_ptr<Session> get(const std::string& id) const;

 private:
  std::shared_ptr<Session> open_session(const std::string& id) const;
  void restore();

  ServiceConfig config_;
  Clock clock_;
  ClipStore store_;
  std::shared_ptr<ServerRegistry> registry_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> background_;
};

/// Report from an events.jsonl file alone.
std::string report_from_log(const std::filesystem::path& log_path, ReportFormat format);

}  // namespace memore
