#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memore/fusion.hpp"
#include "memore/recognizers.hpp"

namespace memore::eval {

/// External label -> taxonomy label, or nullopt to drop the row.
class LabelMap {
 public:
  /// MELD default: anger, disgust, fear, joy, sadness, surprise map to
  /// themselves; neutral is dropped.
  static LabelMap meld();
  /// Identity over the 8 taxonomy names.
  static LabelMap identity();

  void set(const std::string& external, std::optional<EmotionLabel> mapped);
  /// Throws NoGroundTruth for an external label the map does not know.
  std::optional<EmotionLabel> map(const std::string& external) const;

 private:
  std::map<std::string, std::optional<EmotionLabel>> entries_;
};

struct ManifestRow {
  std::string clip_key;
  std::string label;
  double duration_s = 0.0;
  std::string split;
};

struct EvalManifest {
  std::vector<ManifestRow> rows;
  LabelMap label_map = LabelMap::meld();

  /// CSV with header clip_key,label,duration_s,split. Throws
  /// InvalidArgument on malformed rows or duplicate clip keys.
  static EvalManifest parse_csv(std::string_view csv, LabelMap map = LabelMap::meld());
  static EvalManifest load_csv(const std::filesystem::path& path, LabelMap map = LabelMap::meld());
};

// ---------------------------------------------------------------------------
// Segment-length sweep

/// Ground truth of one recording: consecutive labeled intervals. In the
/// manifest each row "<recording>/<n>" is the n-th interval and its
/// duration_s the interval length; intervals are laid end to end in row
/// order.
struct Recording {
  std::string recording_id;
  struct Interval {
    TimeWindow window;
    std::string label;
  };
  std::vector<Interval> intervals;
  double duration_s() const noexcept;
};

std::vector<Recording> recordings_from(const EvalManifest& manifest);

/// Label covering the largest share of `window` (summed per label); an
/// exact tie goes to the label that starts earlier. nullopt when the label
/// is dropped by the map or nothing overlaps.
std::optional<EmotionLabel> majority_label(const Recording& rec, const TimeWindow& window,
                                           const LabelMap& map);

struct LengthResult {
  double length_s = 0.0;
  std::uint64_t segments_total = 0;
  std::uint64_t segments_correct = 0;
  double accuracy() const noexcept;
};

struct SweepResult {
  std::vector<LengthResult> per_length;
  double best_length = 0.0;
};

/// Playback session id used for recording `id` at segment length L,
/// e.g. "interview01@10s".
std::string sweep_session_id(const std::string& recording_id, double length_s);

/// Predicts the dominant label of one segment.
using SegmentPredictor =
    std::function<EmotionLabel(const Recording&, double length_s, const MediaSegment&)>;

struct SweepOptions {
  std::vector<double> lengths = {6, 10, 15, 30, 60};
  double min_tail_s = 3.0;
  FusionConfig fusion;
};

/// For each length: fixed-segment every recording, predict, and compare
/// with the majority ground-truth label. Segments whose majority label is
/// dropped are excluded from every count. Lengths run in parallel. The best
/// length has the highest accuracy (compared as exact fractions); ties go
/// to the shorter length. Throws NoGroundTruth without usable intervals.
SweepResult run_sweep(const EvalManifest& manifest, const SweepOptions& options,
                      const SegmentPredictor& predict);

/// Predictor scoring each segment with a recognizer (typically playback
/// keyed by sweep_session_id) and fusing its channels.
SegmentPredictor recognizer_predictor(const Recognizer& recognizer, FusionConfig fusion);

// ---------------------------------------------------------------------------
// Per-class recall

struct ClassRecall {
  EmotionLabel label = EmotionLabel::Joy;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  double recall() const noexcept;
};

struct ClassResult {
  /// Sorted by recall descending; exact ties in taxonomy order.
  std::vector<ClassRecall> per_class;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  /// truth -> predicted -> count.
  std::map<EmotionLabel, std::map<EmotionLabel, std::uint64_t>> confusion;
  double accuracy() const noexcept;
};

/// Predicts every row whose label survives the map and tallies recall per
/// mapped label. Throws EmptyAfterMapping when no row survives.
ClassResult run_per_class(const EvalManifest& manifest,
                          const std::function<EmotionLabel(const ManifestRow&)>& predict);

/// Predictor looking a clip up in a playback manifest by clip_key.
std::function<EmotionLabel(const ManifestRow&)> playback_clip_predictor(
    std::shared_ptr<const PlaybackManifest> manifest, FusionConfig fusion);

// ---------------------------------------------------------------------------
// Export

nlohmann::json to_json(const SweepResult& r);
nlohmann::json to_json(const ClassResult& r);
std::string to_csv(const SweepResult& r);
std::string to_csv(const ClassResult& r);

/// Writes results.json and results.csv into `dir` (created if needed).
void export_results(const SweepResult& r, const std::filesystem::path& dir);
void export_results(const ClassResult& r, const std::filesystem::path& dir);

}  // namespace memore::eval
