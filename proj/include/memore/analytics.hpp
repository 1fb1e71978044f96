#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memore/records.hpp"

namespace memore {

struct RequirementEmotionRecord {
  std::string requirement_id;
  std::vector<std::uint64_t> segments;
  /// Mean of the linked fused distributions; empty without evidence.
  std::optional<EmotionDistribution> aggregate;
  std::optional<double> valence;
  std::size_t evidence_count = 0;
};

/// One record per requirement id (sorted by id). A segment is linked when
/// its window overlaps any of the requirement's tag intervals by more than
/// zero seconds. Open tags are ignored; close them first.
std::vector<RequirementEmotionRecord> link(const std::vector<SegmentScore>& scores,
                                           const std::vector<RequirementTag>& tags,
                                           const ValenceMap& valence = {});

struct PriorityEntry {
  std::string requirement_id;
  /// Absent for requirements without evidence.
  std::optional<double> priority_score;
  std::size_t rank = 0;
};

struct PriorityOptions {
  /// Multiply by 1 - 1/(1 + evidence_count).
  bool evidence_discount = true;
};

/// priority = valence(aggregate) * (1 - 1/(1+n)), sorted descending; ties
/// go to more evidence, then requirement id. Requirements without evidence
/// come last in id order. Ranks run from 1.
std::vector<PriorityEntry> prioritize(const std::vector<RequirementEmotionRecord>& records,
                                      const ValenceMap& valence, PriorityOptions options = {});

enum class AlertKind { SustainedNegative, ConfusionSpike };

std::string_view to_string(AlertKind k) noexcept;

struct Alert {
  std::string session_id;
  double t_start = 0.0;
  double t_end = 0.0;
  AlertKind kind = AlertKind::SustainedNegative;
  std::uint64_t first_segment = 0;
  std::uint64_t last_segment = 0;
  std::vector<EmotionLabel> trigger_labels;
  double mean_valence = 0.0;

  friend bool operator==(const Alert&, const Alert&) = default;
};

struct AlertOptions {
  std::size_t window_n = 3;
  double threshold = -0.3;
};

/// SustainedNegative over every maximal run of consecutive segment ids
/// whose fused valence is below the threshold, when the run is at least
/// window_n long. Overlapping windows within a run merge into one alert.
/// trigger_labels are the distinct dominant labels of the run in taxonomy
/// order. ConfusionSpike is never emitted: the taxonomy has no label for it.
std::vector<Alert> detect_alerts(const std::string& session_id,
                                 const std::vector<SegmentScore>& scores,
                                 const ValenceMap& valence, AlertOptions options = {});

nlohmann::json to_json(const RequirementEmotionRecord& r);
nlohmann::json to_json(const PriorityEntry& p);
nlohmann::json to_json(const Alert& a);
Alert alert_from_json(const nlohmann::json& j);

/// Everything a validation report is rendered from.
struct ReportInput {
  std::string session_id;
  std::string name;
  std::string created_at;
  std::string ended_at;
  double segment_length_s = 0.0;
  SegmentationMode segmentation_mode = SegmentationMode::Fixed;
  double duration_s = 0.0;
  std::vector<SegmentScore> scores;
  std::vector<ScoringFailure> failures;
  std::vector<RequirementTag> tags;
  std::vector<RequirementEmotionRecord> records;
  std::vector<PriorityEntry> ranking;
  std::vector<Alert> alerts;
  ValenceMap valence;
};

enum class ReportFormat { Json, Markdown };

std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept;

/// Canonical report JSON: sorted keys, 9 significant digits, no wall-clock
/// or latency fields, so identical input gives identical bytes.
nlohmann::json report_json(const ReportInput& in);
std::string render_report(const ReportInput& in, ReportFormat format);

}  // namespace memore
