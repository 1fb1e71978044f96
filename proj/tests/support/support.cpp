#include "support.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "memore/media.hpp"

namespace memore::test {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "memore-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

EmotionDistribution random_distribution(std::mt19937_64& rng, double floor) {
  std::exponential_distribution<double> exp(1.0);
  EmotionDistribution::Mass m{};
  for (auto& x : m) x = exp(rng) + 1e-12;
  auto d = normalize(m);
  if (floor <= 0.0) return d;
  for (std::size_t i = 0; i < kEmotionCount; ++i) m[i] = d.mass()[i] * (1.0 - 8 * floor) + floor;
  return normalize(m);
}

SessionManager::Clock step_clock() {
  auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
  // 2024-05-06T09:00:00Z
  const auto start = std::chrono::system_clock::time_point(std::chrono::seconds(1714986000));
  return [counter, start] { return start + std::chrono::milliseconds(counter->fetch_add(1)); };
}

namespace {

/// Numerical Recipes LCG: reproducible everywhere, unlike std distributions.
struct Lcg {
  std::uint32_t state;
  std::uint32_t next() { return state = state * 1664525u + 1013904223u; }
  double unit() { return (next() >> 8) / 16777216.0; }
};

enum class Mood { Calm, Tense, Upbeat };

Mood mood_at(int segment) {
  if (segment >= 18 && segment < 24) return Mood::Tense;
  if (segment >= 36 && segment < 40) return Mood::Tense;
  if (segment % 4 == 1) return Mood::Upbeat;
  return Mood::Calm;
}

const char* line_for(int segment) {
  static const char* calm[] = {
      "We should plan the export for the next release.",
      "The sync needs to be reliable and secure.",
      "I trust the current backup, it is stable.",
      "Let us prepare the roadmap for the upcoming sprint.",
  };
  static const char* tense[] = {
      "This login flow is terrible and frustrating.",
      "I am worried the upload will crash and fail again.",
      "Honestly the old report screen is awful, I hate it.",
      "It is annoying, ridiculous and unacceptable that it is lost.",
  };
  static const char* upbeat[] = {
      "Wow, the dashboard is amazing, I love it!",
      "That search is great, really fantastic work.",
      "Oh, unexpected! What a wonderful surprise.",
  };
  switch (mood_at(segment)) {
    case Mood::Tense: return tense[segment % 4];
    case Mood::Upbeat: return upbeat[segment % 3];
    case Mood::Calm: break;
  }
  return calm[segment % 4];
}

}  // namespace

MediaSource write_fixture_media(const fs::path& dir, double duration_s) {
  fs::create_directories(dir / "frames");
  const double fps = 2.0;
  const int width = 16, height = 12;
  const int n_frames = static_cast<int>(std::lround(duration_s * fps));
  Lcg rng{12345};
  Image frame{width, height, 1, std::vector<std::uint8_t>(width * height, 128)};
  for (int i = 0; i < n_frames; ++i) {
    const int segment = static_cast<int>(i / fps / 10.0);
    const Mood mood = mood_at(segment);
    const int jitter = mood == Mood::Tense ? 60 : mood == Mood::Upbeat ? 12 : 1;
    for (auto& p : frame.pixels) {
      const int delta = static_cast<int>(rng.next() % (2 * jitter + 1)) - jitter;
      p = static_cast<std::uint8_t>(std::clamp(128 + delta, 0, 255));
    }
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", i);
    write_file(dir / "frames" / name, encode_png(frame));
  }

  PcmAudio audio;
  audio.sample_rate = 16000;
  const auto n_samples = static_cast<std::size_t>(duration_s * audio.sample_rate);
  audio.samples.resize(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double t = static_cast<double>(s) / audio.sample_rate;
    const Mood mood = mood_at(static_cast<int>(t / 10.0));
    double v;
    if (mood == Mood::Tense) {
      v = 0.35 * (rng.unit() * 2.0 - 1.0) + 0.2 * std::sin(2 * M_PI * 2500 * t);
    } else if (mood == Mood::Upbeat) {
      v = 0.12 * std::sin(2 * M_PI * 220 * t) + 0.02 * (rng.unit() * 2.0 - 1.0);
    } else {
      v = 0.015 * std::sin(2 * M_PI * 140 * t);
    }
    audio.samples[s] = static_cast<std::int16_t>(std::lround(std::clamp(v, -1.0, 1.0) * 32767));
  }
  write_file(dir / "audio.wav", encode_wav(audio));

  std::ostringstream transcript;
  for (int segment = 0; segment * 10.0 < duration_s; ++segment) {
    if (segment % 6 == 5) continue;  // some silent stretches
    transcript << segment * 10 + 1 << "\t" << segment * 10 + 7 << "\t" << line_for(segment) << "\n";
  }
  write_file(dir / "transcript.txt", transcript.str());

  MediaSource src;
  src.frames_dir = dir / "frames";
  src.frames_fps = fps;
  src.audio = dir / "audio.wav";
  src.transcript = dir / "transcript.txt";
  return src;
}

ServiceConfig fixture_config(const fs::path& storage) {
  ServiceConfig cfg = ServiceConfig::defaults();
  cfg.storage_dir = storage;
  cfg.segmenter.target_fps = 2.0;
  // the synthetic tense stretches sit near -0.25 valence
  cfg.analytics.alerts.threshold = -0.2;
  return cfg;
}

std::string run_fixture_session(SessionManager& sessions, const MediaSource& media) {
  const std::string id = sessions.create("Fixture elicitation interview", std::string("fixture"));
  sessions.tag(id, "REQ-LOGIN", TagAction::Open, 12.0, "login flow");
  sessions.tag(id, "REQ-LOGIN", TagAction::Close, 31.5);
  sessions.tag(id, "REQ-EXPORT", TagAction::Open, 175.0, "export");
  sessions.tag(id, "REQ-SEARCH", TagAction::Open, 95.0, "search");
  sessions.tag(id, "REQ-SEARCH", TagAction::Close, 125.0);
  sessions.tag(id, "REQ-ARCHIVE", TagAction::Open, 490.0, "archive");
  sessions.ingest(id, media);
  sessions.tag(id, "REQ-EXPORT", TagAction::Close, 245.0);
  sessions.tag(id, "REQ-SEARCH", TagAction::Open, 410.0);
  sessions.tag(id, "REQ-SYNC", TagAction::Open, 300.0, "sync");
  sessions.stop(id);
  return sessions.report(id, ReportFormat::Json);
}

FakeRecognizer::FakeRecognizer(std::string model_id, std::set<Modality> modalities, Fn fn)
    : Recognizer({std::move(model_id), std::move(modalities), RecognizerKind::Reference, std::nullopt}),
      fn_(std::move(fn)) {}

EmotionDistribution FakeRecognizer::score_modality(const MediaSegment& segment,
                                                   Modality modality) const {
  return fn_(segment, modality);
}

MediaSegment bare_segment(std::uint64_t id, std::set<Modality> modalities, double length_s) {
  MediaSegment s;
  s.segment_id = id;
  s.session_id = "sched";
  s.t_start = id * length_s;
  s.t_end = (id + 1) * length_s;
  s.modalities_present = std::move(modalities);
  for (auto m : s.modalities_present) s.payload_refs[m] = "unused";
  return s;
}

ScheduleReport run_latency_schedule(std::uint64_t seed, std::uint64_t segments) {
  std::mt19937_64 rng(seed);
  enum class Fate { Normal, Fails, Stalls };
  std::vector<std::chrono::microseconds> latency(segments);
  std::vector<Fate> fate(segments, Fate::Normal);
  std::uniform_int_distribution<int> us(0, 2500);
  for (std::uint64_t i = 0; i < segments; ++i) {
    latency[i] = std::chrono::microseconds(us(rng));
    const auto roll = rng() % 64;
    if (roll == 0) fate[i] = Fate::Fails;
    if (roll == 1 && seed % 4 == 0) fate[i] = Fate::Stalls;
  }
  const double timeout_s = 0.02;
  auto rec = std::make_shared<FakeRecognizer>(
      "fake", std::set<Modality>{Modality::Audio}, [&](const MediaSegment& seg, Modality) {
        const auto id = seg.segment_id;
        if (fate[id] == Fate::Stalls) {
          std::this_thread::sleep_for(std::chrono::milliseconds(40));
        } else {
          std::this_thread::sleep_for(latency[id]);
        }
        if (fate[id] == Fate::Fails) throw Error(ErrorCode::PayloadUnreadable, "broken clip");
        EmotionDistribution::Mass m{};
        m[id % kEmotionCount] = 1.0;
        return normalize(m);
      });
  auto registry = std::make_shared<ServerRegistry>();
  registry->add(rec);
  PipelineOptions opt;
  opt.in_flight_limit = 8;
  opt.reorder_timeout_s = timeout_s;

  ScheduleReport report;
  report.bound = reorder_bound(timeout_s, 10.0, opt.in_flight_limit);
  std::vector<int> seen(segments, 0);
  {
    ScoringPipeline pipeline(registry, RoutingPolicy{}, FusionConfig{}, opt,
                             [&](const MediaSegment& seg, const Outcome& o) {
                               const auto id = segment_id_of(o);
                               if (id != seg.segment_id && report.violation.empty())
                                 report.violation = "outcome/segment mismatch";
                               if (!report.emitted.empty() && id <= report.emitted.back() &&
                                   report.violation.empty())
                                 report.violation = "non-ascending emission " + std::to_string(id);
                               report.emitted.push_back(id);
                               if (id < segments) ++seen[id];
                               if (auto* f = std::get_if<ScoringFailure>(&o)) {
                                 ++report.failures;
                                 if (f->reason == ErrorCode::Timeout) ++report.timeouts;
                               }
                             });
    for (std::uint64_t i = 0; i < segments; ++i) pipeline.submit(bare_segment(i, {Modality::Audio}));
    pipeline.drain();
    report.high_water = pipeline.reorder_high_water();
    // let stalled workers deliver late; those must be dropped
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  for (std::uint64_t i = 0; i < segments && report.violation.empty(); ++i) {
    if (seen[i] != 1) report.violation = "segment " + std::to_string(i) + " emitted " +
                                         std::to_string(seen[i]) + " times";
  }
  if (report.emitted.size() != segments && report.violation.empty())
    report.violation = "emitted " + std::to_string(report.emitted.size()) + " outcomes";
  if (report.high_water > report.bound && report.violation.empty())
    report.violation = "reorder buffer held " + std::to_string(report.high_water) + " entries";
  return report;
}

fs::path data_dir() { return MEMORE_DATA_DIR; }
fs::path golden_dir() { return MEMORE_GOLDEN_DIR; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace memore::test
