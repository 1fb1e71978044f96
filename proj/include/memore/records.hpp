#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "memore/emotion.hpp"

namespace memore {

enum class SegmentationMode { Fixed, Conversational };

std::string_view to_string(SegmentationMode mode) noexcept;
std::optional<SegmentationMode> parse_segmentation_mode(std::string_view s) noexcept;

/// Half-open time window [t_start, t_end) in seconds from session start.
struct TimeWindow {
  double t_start = 0.0;
  double t_end = 0.0;

  double duration() const noexcept { return t_end - t_start; }
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Positive-length overlap of two half-open windows, 0 when disjoint.
double overlap(const TimeWindow& a, const TimeWindow& b) noexcept;

struct MediaSegment {
  std::uint64_t segment_id = 0;
  std::string session_id;
  double t_start = 0.0;
  double t_end = 0.0;
  std::set<Modality> modalities_present;
  /// Locators relative to the clip store root; keys equal
  /// modalities_present.
  std::map<Modality, std::string> payload_refs;
  double frame_rate = 0.0;
  /// Set when no modality had data inside the window.
  bool empty = false;

  TimeWindow window() const noexcept { return {t_start, t_end}; }
  friend bool operator==(const MediaSegment&, const MediaSegment&) = default;
};

nlohmann::json to_json(const MediaSegment& s);
MediaSegment media_segment_from_json(const nlohmann::json& j);

/// Scoring channel: one modality, or a joint audio+video distribution
/// returned by a multi-modal server.
enum class Channel : std::uint8_t { Video, Audio, Text, AudioVisual };

std::string_view to_string(Channel c) noexcept;
std::optional<Channel> parse_channel(std::string_view s) noexcept;
Channel channel_of(Modality m) noexcept;
/// Modalities a channel's evidence is drawn from.
std::set<Modality> modalities_of(Channel c);

struct ChannelScore {
  EmotionDistribution distribution;
  std::string model_id;
  friend bool operator==(const ChannelScore&, const ChannelScore&) = default;
};

struct SegmentScore {
  std::uint64_t segment_id = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::map<Channel, ChannelScore> per_modality;
  EmotionDistribution fused;
  EmotionLabel dominant = EmotionLabel::Joy;
  double latency_ms = 0.0;
  /// Partial failures: modality -> "<ErrorCode>: message".
  std::map<Modality, std::string> failures;

  TimeWindow window() const noexcept { return {t_start, t_end}; }
  friend bool operator==(const SegmentScore&, const SegmentScore&) = default;
};

nlohmann::json to_json(const SegmentScore& s);
SegmentScore segment_score_from_json(const nlohmann::json& j);

/// Terminal outcome of a segment that produced no usable score.
struct ScoringFailure {
  std::uint64_t segment_id = 0;
  ErrorCode reason = ErrorCode::ScoringFailed;
  std::map<Modality, std::string> errors;
  std::string message;
  friend bool operator==(const ScoringFailure&, const ScoringFailure&) = default;
};

nlohmann::json to_json(const ScoringFailure& f);
ScoringFailure scoring_failure_from_json(const nlohmann::json& j);
std::optional<ErrorCode> parse_error_code(std::string_view s) noexcept;

struct RequirementTag {
  std::string requirement_id;
  std::string label;
  double t_start = 0.0;
  std::optional<double> t_end;

  bool closed() const noexcept { return t_end.has_value(); }
  friend bool operator==(const RequirementTag&, const RequirementTag&) = default;
};

inline constexpr std::size_t kMaxRequirementIdLength = 128;
/// Throws InvalidArgument for empty or over-long ids.
void validate_requirement_id(const std::string& id);

nlohmann::json to_json(const RequirementTag& t);
RequirementTag requirement_tag_from_json(const nlohmann::json& j);

}  // namespace memore
