#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "memore/records.hpp"

namespace memore::protocol {

inline constexpr int kProtocolVersion = 1;
/// Inline base64 payloads must decode to less than this many bytes.
inline constexpr std::size_t kMaxInlineBytes = 1u << 20;

enum class Violation {
  InvalidJson,
  MissingField,
  WrongType,
  UnknownField,
  UnsupportedVersion,
  EmptyModalities,
  BadDistribution,
  BadSum,
  SegmentMismatch,
  PayloadTooLarge,
};

std::string_view error_code(Violation v) noexcept;

/// ProtocolViolation carrying the machine-readable error_code used in
/// HTTP 422 bodies.
class ProtocolError : public Error {
 public:
  ProtocolError(Violation v, const std::string& message)
      : Error(ErrorCode::ProtocolViolation, message), violation_(v) {}
  Violation violation() const noexcept { return violation_; }
  std::string_view error_code() const noexcept { return protocol::error_code(violation_); }

 private:
  Violation violation_;
};

struct VideoPayload {
  std::string frames_uri;
  std::uint64_t frame_count = 0;
  double fps = 0.0;
  friend bool operator==(const VideoPayload&, const VideoPayload&) = default;
};

/// Exactly one of wav_uri / wav_base64 is set.
struct AudioPayload {
  std::optional<std::string> wav_uri;
  std::optional<std::string> wav_base64;
  int sample_rate = 0;
  friend bool operator==(const AudioPayload&, const AudioPayload&) = default;
};

struct TextPayload {
  std::string content;
  friend bool operator==(const TextPayload&, const TextPayload&) = default;
};

struct ScoreRequest {
  std::string session_id;
  std::uint64_t segment_id = 0;
  std::optional<VideoPayload> video;
  std::optional<AudioPayload> audio;
  std::optional<TextPayload> text;

  std::set<Modality> modalities() const;
  friend bool operator==(const ScoreRequest&, const ScoreRequest&) = default;
};

struct ScoreResponse {
  std::uint64_t segment_id = 0;
  std::string model_id;
  std::map<Channel, EmotionDistribution> distributions;
  double latency_ms = 0.0;
  friend bool operator==(const ScoreResponse&, const ScoreResponse&) = default;
};

struct HealthResponse {
  std::string status;
  std::string model_id;
  std::set<Modality> modalities;
};

nlohmann::json to_json(const ScoreRequest& r);
nlohmann::json to_json(const ScoreResponse& r);
nlohmann::json to_json(const HealthResponse& r);

/// Strict validators: unknown keys, wrong types, a version other than 1,
/// or a distribution that is not a distribution all raise ProtocolError.
ScoreRequest parse_request(const nlohmann::json& j);
ScoreResponse parse_response(const nlohmann::json& j);
HealthResponse parse_health(const nlohmann::json& j);

/// Parses text first; InvalidJson on syntax errors.
ScoreRequest parse_request_text(std::string_view body);
ScoreResponse parse_response_text(std::string_view body);

/// Canonical text form: sorted keys, two-space indent, trailing newline.
std::string canonical(const nlohmann::json& j);

nlohmann::json error_body(const ProtocolError& e);

std::string base64_encode(std::string_view bytes);
/// Throws ProtocolError(WrongType) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace memore::protocol
