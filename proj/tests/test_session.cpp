#include <cstdlib>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "memore/session.hpp"
#include "support.hpp"

using namespace memore;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::size_t count_kind(const std::vector<SessionEvent>& events, EventKind kind) {
  return std::count_if(events.begin(), events.end(), [&](auto& e) { return e.kind == kind; });
}

/// Fixture media written once per test binary run.
const MediaSource& fixture_media() {
  static test::TempDir dir;
  static MediaSource media = test::write_fixture_media(dir.path());
  return media;
}

bool update_goldens() { return std::getenv("MEMORE_UPDATE_GOLDEN") != nullptr; }

void check_golden(const std::string& name, const std::string& actual) {
  const auto path = test::golden_dir() / "report" / name;
  if (update_goldens()) {
    write_file(path, actual);
    return;
  }
  ASSERT_TRUE(fs::exists(path)) << path << " missing; run with MEMORE_UPDATE_GOLDEN=1";
  EXPECT_EQ(actual, test::read_text(path)) << "golden mismatch: " << name;
}

LoadedMedia audio_only(double seconds) {
  LoadedMedia m;
  AudioBlock b;
  b.samples.resize(static_cast<std::size_t>(seconds * 16000));
  for (std::size_t i = 0; i < b.samples.size(); ++i) b.samples[i] = static_cast<std::int16_t>((i % 50) * 200);
  m.audio.push_back(std::move(b));
  m.duration_s = seconds;
  return m;
}

}  // namespace

class FixtureSession : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    storage_ = new test::TempDir();
    SessionManager sessions(test::fixture_config(storage_->path()), test::step_clock());
    json_report_ = new std::string(test::run_fixture_session(sessions, fixture_media()));
    md_report_ = new std::string(sessions.report("fixture", ReportFormat::Markdown));
  }
  static void TearDownTestSuite() {
    delete storage_;
    delete json_report_;
    delete md_report_;
  }
  static fs::path log_path() { return storage_->path() / "fixture" / "events.jsonl"; }

  static test::TempDir* storage_;
  static std::string* json_report_;
  static std::string* md_report_;
};

test::TempDir* FixtureSession::storage_ = nullptr;
std::string* FixtureSession::json_report_ = nullptr;
std::string* FixtureSession::md_report_ = nullptr;

TEST_F(FixtureSession, FortyEightCapturedAndTerminal) {
  auto events = read_event_log(log_path());
  EXPECT_EQ(count_kind(events, EventKind::SegmentCaptured), 48u);
  EXPECT_EQ(count_kind(events, EventKind::SegmentScored) + count_kind(events, EventKind::ScoringFailed), 48u);
  EXPECT_EQ(count_kind(events, EventKind::SessionStarted), 1u);
  EXPECT_EQ(count_kind(events, EventKind::SessionEnded), 1u);
  EXPECT_EQ(events.front().kind, EventKind::SessionStarted);
  EXPECT_EQ(events.back().kind, EventKind::SessionEnded);
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, i);
  // every capture precedes its terminal event
  std::set<std::uint64_t> captured;
  for (const auto& e : events) {
    if (e.kind == EventKind::SegmentCaptured) captured.insert(e.payload["segment_id"].get<std::uint64_t>());
    if (e.kind == EventKind::SegmentScored || e.kind == EventKind::ScoringFailed)
      EXPECT_TRUE(captured.count(e.payload["segment_id"].get<std::uint64_t>()));
  }
}

TEST_F(FixtureSession, ReportHasAlertsAndRanking) {
  auto j = json::parse(*json_report_);
  EXPECT_EQ(j["timeline"].size(), 48u);
  EXPECT_GE(j["alerts"].size(), 1u);
  EXPECT_EQ(j["ranking"].size(), 5u);
  EXPECT_EQ(j["ranking"].back()["requirement_id"], "REQ-ARCHIVE");  // no evidence
  EXPECT_EQ(j["session"]["created_at"], "2024-05-06T09:00:00.000Z");
}

TEST_F(FixtureSession, MatchesGoldenReport) {
  check_golden("fixture_session.json", *json_report_);
  check_golden("fixture_session.md", *md_report_);
}

TEST_F(FixtureSession, ColdReplayIsByteIdentical) {
  EXPECT_EQ(report_from_log(log_path(), ReportFormat::Json), *json_report_);
  EXPECT_EQ(report_from_log(log_path(), ReportFormat::Markdown), *md_report_);
  auto state = replay(read_event_log(log_path()));
  EXPECT_EQ(render_report(state.report_input(), ReportFormat::Json), *json_report_);
}

TEST_F(FixtureSession, TagsClosedAsRequested) {
  auto state = replay(read_event_log(log_path()));
  std::map<std::string, std::vector<std::pair<double, double>>> tags;
  for (const auto& t : state.tags) tags[t.requirement_id].push_back({t.t_start, *t.t_end});
  EXPECT_EQ(tags["REQ-LOGIN"], (std::vector<std::pair<double, double>>{{12.0, 31.5}}));
  EXPECT_EQ(tags["REQ-SEARCH"], (std::vector<std::pair<double, double>>{{95.0, 125.0}, {410.0, 480.0}}));
  EXPECT_EQ(tags["REQ-SYNC"], (std::vector<std::pair<double, double>>{{300.0, 480.0}}));
  EXPECT_EQ(tags["REQ-ARCHIVE"], (std::vector<std::pair<double, double>>{{490.0, 490.0}}));
}

TEST_F(FixtureSession, RestartRestoresIdenticalLog) {
  const auto before = test::read_text(log_path());
  SessionManager again(test::fixture_config(storage_->path()), test::step_clock());
  auto list = again.list();
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].session_id, "fixture");
  EXPECT_TRUE(list[0].ended);
  EXPECT_EQ(list[0].segments, 48u);
  EXPECT_EQ(test::read_text(log_path()), before);
  EXPECT_EQ(again.report("fixture", ReportFormat::Json), *json_report_);
  EXPECT_ERROR_CODE(again.ingest("fixture", audio_only(5)), ErrorCode::SessionClosed);
  EXPECT_ERROR_CODE(again.tag("fixture", "R", TagAction::Open, 1.0), ErrorCode::SessionClosed);
  EXPECT_ERROR_CODE(again.stop("fixture"), ErrorCode::SessionClosed);
  EXPECT_EQ(test::read_text(log_path()), before);  // no events appended
}

TEST(Session, CreateAndRestartEmpty) {
  test::TempDir dir;
  std::string id;
  {
    SessionManager m(test::fixture_config(dir.path()), test::step_clock());
    id = m.create("first");
    EXPECT_EQ(id.size(), 14u);
    EXPECT_EQ(id.rfind("s-", 0), 0u);
    EXPECT_ERROR_CODE(m.create("dup", id), ErrorCode::InvalidArgument);
    EXPECT_ERROR_CODE(m.create("bad", std::string("no/slash")), ErrorCode::InvalidArgument);
    EXPECT_ERROR_CODE(m.report(id, ReportFormat::Json), ErrorCode::SessionStillOpen);
    EXPECT_ERROR_CODE(m.get("missing"), ErrorCode::UnknownSession);
    m.stop(id);
  }
  const auto log = test::read_text(dir / id / "events.jsonl");
  SessionManager m(test::fixture_config(dir.path()), test::step_clock());
  ASSERT_EQ(m.list().size(), 1u);
  EXPECT_EQ(test::read_text(dir / id / "events.jsonl"), log);
  auto report = json::parse(m.report(id, ReportFormat::Json));
  EXPECT_TRUE(report["timeline"].empty());
  EXPECT_TRUE(report["ranking"].empty());
}

TEST(Session, AudioOnlySource) {
  test::TempDir dir;
  SessionManager m(test::fixture_config(dir.path()), test::step_clock());
  auto id = m.create("phone call");
  m.ingest(id, audio_only(30));
  auto state = m.get(id)->state();
  ASSERT_EQ(state.captured.size(), 3u);
  for (const auto& [_, seg] : state.captured) EXPECT_EQ(seg.modalities_present, std::set<Modality>{Modality::Audio});
  ASSERT_EQ(state.scores.size(), 3u);
  EXPECT_EQ(state.scores.begin()->second.per_modality.count(Channel::Audio), 1u);
}

TEST(Session, IngestContinuesTimeline) {
  test::TempDir dir;
  SessionManager m(test::fixture_config(dir.path()), test::step_clock());
  auto id = m.create("two parts");
  m.ingest(id, audio_only(25));
  m.ingest(id, audio_only(20));
  auto state = m.get(id)->state();
  std::vector<TimeWindow> windows;
  for (const auto& [_, seg] : state.captured) windows.push_back(seg.window());
  EXPECT_EQ(windows, (std::vector<TimeWindow>{{0, 10}, {10, 20}, {20, 25}, {25, 35}, {35, 45}}));
  EXPECT_EQ(state.media_end, 45.0);
}

TEST(Session, TagRules) {
  test::TempDir dir;
  SessionManager m(test::fixture_config(dir.path()), test::step_clock());
  auto id = m.create("tags");
  m.ingest(id, audio_only(100));
  auto opened = m.tag(id, "R1", TagAction::Open, 12.0, "login");
  EXPECT_EQ(opened.kind, EventKind::RequirementTagged);
  EXPECT_ERROR_CODE(m.tag(id, "R1", TagAction::Open, 13.0), ErrorCode::DuplicateOpenTag);
  EXPECT_ERROR_CODE(m.tag(id, "R2", TagAction::Close, 13.0), ErrorCode::NoOpenTag);
  EXPECT_ERROR_CODE(m.tag(id, "R1", TagAction::Close, 10.0), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(m.tag(id, "", TagAction::Open, 1.0), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(m.tag(id, std::string(129, 'x'), TagAction::Open, 1.0), ErrorCode::InvalidArgument);
  m.tag(id, "R1", TagAction::Close, 31.5);
  m.tag(id, "R3", TagAction::Open, 70.0);
  m.tag(id, "R1", TagAction::Open);  // defaults to the media end
  m.stop(id);
  auto state = m.get(id)->state();
  ASSERT_EQ(state.tags.size(), 3u);
  EXPECT_EQ(state.tags[0], (RequirementTag{"R1", "login", 12.0, 31.5}));
  EXPECT_EQ(state.tags[1], (RequirementTag{"R3", "", 70.0, 100.0}));
  EXPECT_EQ(state.tags[2], (RequirementTag{"R1", "", 100.0, 100.0}));
  auto events = m.get(id)->events_since(0);
  auto last_tag = std::find_if(events.rbegin(), events.rend(),
                               [](auto& e) { return e.kind == EventKind::RequirementTagged; });
  EXPECT_EQ(last_tag->payload["auto"], true);
  auto report = json::parse(m.report(id, ReportFormat::Json));
  EXPECT_EQ(report["requirements"][0]["segments"], json::array({1, 2, 3}));
}

TEST(Session, ConcurrentSessionsHaveIndependentIds) {
  test::TempDir dir;
  SessionManager m(test::fixture_config(dir.path()), test::step_clock());
  auto a = m.create("a", std::string("alpha"));
  auto b = m.create("b", std::string("beta"));
  std::thread ta([&] { m.ingest(a, audio_only(60)); });
  std::thread tb([&] { m.ingest(b, audio_only(40)); });
  ta.join();
  tb.join();
  auto ids = [&](const std::string& id) {
    std::vector<std::uint64_t> out;
    for (auto& [k, _] : m.get(id)->state().scores) out.push_back(k);
    return out;
  };
  EXPECT_EQ(ids(a), (std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(ids(b), (std::vector<std::uint64_t>{0, 1, 2, 3}));
}

TEST(Session, BackgroundIngestThenStop) {
  test::TempDir dir;
  auto media_dir = dir / "media";
  fs::create_directories(media_dir);
  PcmAudio pcm;
  pcm.samples.assign(16000 * 20, 1000);
  write_file(media_dir / "a.wav", encode_wav(pcm));
  SessionManager m(test::fixture_config(dir / "store"), test::step_clock());
  auto id = m.create("bg");
  MediaSource src;
  src.audio = media_dir / "a.wav";
  m.ingest_background(id, src);
  m.stop(id);  // waits for the ingest
  EXPECT_EQ(m.get(id)->state().scores.size(), 2u);
  MediaSource bad;
  bad.audio = media_dir / "missing.wav";
  auto other = m.create("bad");
  EXPECT_ERROR_CODE(m.ingest_background(other, bad), ErrorCode::IngestFormatError);
  EXPECT_ERROR_CODE(m.ingest(other, MediaSource{}), ErrorCode::IngestFormatError);
}

TEST(Session, DanglingSegmentsFailOnRestart) {
  test::TempDir dir;
  std::string id;
  {
    SessionManager m(test::fixture_config(dir.path()), test::step_clock());
    id = m.create("crash");
    m.ingest(id, audio_only(20));
  }
  // simulate a crash after capture: drop the terminal events, keep captures
  const auto path = dir / id / "events.jsonl";
  auto events = read_event_log(path);
  std::string kept;
  std::uint64_t seq = 0;
  for (auto e : events) {
    if (e.kind == EventKind::SegmentScored || e.kind == EventKind::ScoringFailed ||
        e.kind == EventKind::AlertRaised)
      continue;
    e.seq = seq++;
    kept += event_line(e) + "\n";
  }
  kept += R"({"seq":)";  // torn final write
  write_file(path, kept);

  SessionManager m(test::fixture_config(dir.path()), test::step_clock());
  auto state = m.get(id)->state();
  EXPECT_EQ(state.captured.size(), 2u);
  EXPECT_EQ(state.failures.size(), 2u);
  EXPECT_TRUE(state.dangling().empty());
  EXPECT_EQ(state.failures.begin()->second.reason, ErrorCode::ScoringFailed);
  m.stop(id);
}

TEST(EventLog, StrictReplay) {
  SessionEvent start{0, "2024-01-01T00:00:00.000Z", EventKind::SessionStarted,
                     {{"session_id", "x"}, {"name", "n"}}};
  SessionState s;
  SessionEvent gap{2, "2024-01-01T00:00:00.000Z", EventKind::SessionEnded, {{"t_end", 0}}};
  EXPECT_ERROR_CODE(replay({gap}), ErrorCode::IoError);
  auto line = event_line(start);
  auto back = session_event_from_json(json::parse(line));
  EXPECT_EQ(event_line(back), line);
  auto extra = json::parse(line);
  extra["oops"] = 1;
  EXPECT_ERROR_CODE(session_event_from_json(extra), ErrorCode::IoError);
  EXPECT_EQ(parse_event_kind("AlertRaised"), EventKind::AlertRaised);
  EXPECT_FALSE(parse_event_kind("Nope"));
}

TEST(EventLog, MalformedMiddleLine) {
  test::TempDir dir;
  write_file(dir / "events.jsonl", std::string("not json\n{}\n"));
  EXPECT_ERROR_CODE(read_event_log(dir / "events.jsonl"), ErrorCode::IoError);
}

TEST(Media, LoadMediaFormats) {
  test::TempDir dir;
  write_file(dir / "t.txt", std::string("0\t2\thello there\n3.5\t4\tbye.\n"));
  MediaSource src;
  src.transcript = dir / "t.txt";
  auto m = load_media(src);
  ASSERT_EQ(m.transcript.size(), 2u);
  EXPECT_EQ(m.transcript[1].text, "bye.");
  EXPECT_EQ(m.duration_s, 4.0);
  write_file(dir / "bad.txt", std::string("zero\t2\thi\n"));
  src.transcript = dir / "bad.txt";
  EXPECT_ERROR_CODE(load_media(src), ErrorCode::IngestFormatError);
  PcmAudio odd;
  odd.sample_rate = 22050;
  odd.samples.assign(100, 0);
  write_file(dir / "odd.wav", encode_wav(odd));
  MediaSource a;
  a.audio = dir / "odd.wav";
  EXPECT_ERROR_CODE(load_media(a), ErrorCode::IngestFormatError);
}

TEST(Clock, FormatUtc) {
  EXPECT_EQ(format_utc(std::chrono::system_clock::time_point(std::chrono::milliseconds(1714986000123))),
            "2024-05-06T09:00:00.123Z");
}
