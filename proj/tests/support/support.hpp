#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "memore/recognizers.hpp"
#include "memore/router.hpp"
#include "memore/session.hpp"

#define EXPECT_ERROR_CODE(stmt, expected)                                   \
  do {                                                                      \
    try {                                                                   \
      stmt;                                                                 \
      ADD_FAILURE() << "expected " << ::memore::to_string(expected);        \
    } catch (const ::memore::Error& e_) {                                   \
      EXPECT_EQ(e_.code(), expected) << e_.what();                          \
    }                                                                       \
  } while (0)

namespace memore::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Random distribution; every entry is at least `floor` (before the final
/// renormalization, which can only raise it).
EmotionDistribution random_distribution(std::mt19937_64& rng, double floor = 0.0);

/// Clock starting at 2024-05-06T09:00:00Z that advances 1 ms per call.
SessionManager::Clock step_clock();

/// Deterministic 480 s interview: 2 fps gray frames, 16 kHz audio and a
/// transcript, with calm, tense and upbeat stretches.
MediaSource write_fixture_media(const std::filesystem::path& dir, double duration_s = 480.0);

/// Reference recognizers only; frames resampled at 2 fps; alerts below -0.2.
ServiceConfig fixture_config(const std::filesystem::path& storage);

/// Creates session "fixture", tags requirements, ingests the fixture media,
/// stops, and returns the JSON report.
std::string run_fixture_session(SessionManager& sessions, const MediaSource& media);

/// Recognizer driven by a callback; the callback may sleep or throw.
class FakeRecognizer final : public Recognizer {
 public:
  using Fn = std::function<EmotionDistribution(const MediaSegment&, Modality)>;
  FakeRecognizer(std::string model_id, std::set<Modality> modalities, Fn fn);
  bool up = true;
  bool probe() const override { return up; }

 protected:
  EmotionDistribution score_modality(const MediaSegment& segment, Modality modality) const override;

 private:
  Fn fn_;
};

/// Segment with the given modalities and no payloads.
MediaSegment bare_segment(std::uint64_t id, std::set<Modality> modalities, double length_s = 10.0);

struct ScheduleReport {
  std::vector<std::uint64_t> emitted;
  std::size_t timeouts = 0;
  std::size_t failures = 0;
  std::size_t high_water = 0;
  std::size_t bound = 0;
  /// Empty when every ordering invariant held.
  std::string violation;
};

/// Pushes `segments` segments through a ScoringPipeline whose recognizer
/// sleeps a random latency per segment (seeded), occasionally failing or
/// stalling past the reorder timeout, and checks ordered exactly-once
/// delivery and the reorder bound.
ScheduleReport run_latency_schedule(std::uint64_t seed, std::uint64_t segments = 48);

/// Source tree data directory.
std::filesystem::path data_dir();
std::filesystem::path golden_dir();

std::string read_text(const std::filesystem::path& p);

}  // namespace memore::test
