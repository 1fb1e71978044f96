#include "memore/records.hpp"

#include <algorithm>
#include <array>

#include "json_util.hpp"

namespace memore {

using nlohmann::json;

std::string_view to_string(SegmentationMode mode) noexcept {
  return mode == SegmentationMode::Fixed ? "fixed" : "conversational";
}

std::optional<SegmentationMode> parse_segmentation_mode(std::string_view s) noexcept {
  if (s == "fixed") return SegmentationMode::Fixed;
  if (s == "conversational") return SegmentationMode::Conversational;
  return std::nullopt;
}

double overlap(const TimeWindow& a, const TimeWindow& b) noexcept {
  double lo = std::max(a.t_start, b.t_start);
  double hi = std::min(a.t_end, b.t_end);
  return hi > lo ? hi - lo : 0.0;
}

namespace {

Modality modality_from(const std::string& name) {
  auto m = parse_modality(name);
  if (!m) throw Error(ErrorCode::InvalidArgument, "unknown modality '" + name + "'");
  return *m;
}

json modality_error_map(const std::map<Modality, std::string>& errors) {
  json j = json::object();
  for (const auto& [m, msg] : errors) j[std::string(to_string(m))] = msg;
  return j;
}

std::map<Modality, std::string> modality_error_map_from(const json& j) {
  std::map<Modality, std::string> out;
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "errors must be an object");
  for (const auto& [k, v] : j.items()) out[modality_from(k)] = v.get<std::string>();
  return out;
}

}  // namespace

json to_json(const MediaSegment& s) {
  json mods = json::array();
  for (auto m : s.modalities_present) mods.push_back(std::string(to_string(m)));
  json refs = json::object();
  for (const auto& [m, ref] : s.payload_refs) refs[std::string(to_string(m))] = ref;
  return json{{"segment_id", s.segment_id},
              {"session_id", s.session_id},
              {"t_start", round_sig9(s.t_start)},
              {"t_end", round_sig9(s.t_end)},
              {"modalities_present", std::move(mods)},
              {"payload_refs", std::move(refs)},
              {"frame_rate", round_sig9(s.frame_rate)},
              {"empty", s.empty}};
}

MediaSegment media_segment_from_json(const json& j) {
  MediaSegment s;
  s.segment_id = detail::count(j, "segment_id");
  s.session_id = detail::text(j, "session_id");
  s.t_start = detail::number(j, "t_start");
  s.t_end = detail::number(j, "t_end");
  if (!(s.t_end > s.t_start)) {
    throw Error(ErrorCode::InvalidArgument, "segment t_end must exceed t_start");
  }
  for (const auto& m : detail::field(j, "modalities_present")) {
    s.modalities_present.insert(modality_from(m.get<std::string>()));
  }
  for (const auto& [k, v] : detail::field(j, "payload_refs").items()) {
    s.payload_refs[modality_from(k)] = v.get<std::string>();
  }
  s.frame_rate = detail::number(j, "frame_rate");
  s.empty = j.value("empty", false);
  std::set<Modality> ref_keys;
  for (const auto& [m, _] : s.payload_refs) ref_keys.insert(m);
  if (ref_keys != s.modalities_present) {
    throw Error(ErrorCode::InvalidArgument,
                "payload_refs keys must equal modalities_present");
  }
  return s;
}

std::string_view to_string(Channel c) noexcept {
  switch (c) {
    case Channel::Video: return "video";
    case Channel::Audio: return "audio";
    case Channel::Text: return "text";
    case Channel::AudioVisual: return "audiovisual";
  }
  return "";
}

std::optional<Channel> parse_channel(std::string_view s) noexcept {
  if (s == "video") return Channel::Video;
  if (s == "audio") return Channel::Audio;
  if (s == "text") return Channel::Text;
  if (s == "audiovisual") return Channel::AudioVisual;
  return std::nullopt;
}

Channel channel_of(Modality m) noexcept {
  switch (m) {
    case Modality::Video: return Channel::Video;
    case Modality::Audio: return Channel::Audio;
    case Modality::Text: return Channel::Text;
  }
  return Channel::Text;
}

std::set<Modality> modalities_of(Channel c) {
  switch (c) {
    case Channel::Video: return {Modality::Video};
    case Channel::Audio: return {Modality::Audio};
    case Channel::Text: return {Modality::Text};
    case Channel::AudioVisual: return {Modality::Video, Modality::Audio};
  }
  return {};
}

json to_json(const SegmentScore& s) {
  json per = json::object();
  for (const auto& [c, cs] : s.per_modality) {
    per[std::string(to_string(c))] =
        json{{"distribution", to_json(cs.distribution)}, {"model_id", cs.model_id}};
  }
  return json{{"segment_id", s.segment_id},
              {"t_start", round_sig9(s.t_start)},
              {"t_end", round_sig9(s.t_end)},
              {"per_modality", std::move(per)},
              {"fused", to_json(s.fused)},
              {"dominant", std::string(to_string(s.dominant))},
              {"latency_ms", round_sig9(s.latency_ms)},
              {"failures", modality_error_map(s.failures)}};
}

SegmentScore segment_score_from_json(const json& j) {
  SegmentScore s;
  s.segment_id = detail::count(j, "segment_id");
  s.t_start = detail::number(j, "t_start");
  s.t_end = detail::number(j, "t_end");
  for (const auto& [k, v] : detail::field(j, "per_modality").items()) {
    auto c = parse_channel(k);
    if (!c) throw Error(ErrorCode::InvalidArgument, "unknown channel '" + k + "'");
    s.per_modality[*c] = ChannelScore{distribution_from_json(detail::field(v, "distribution")),
                                      detail::text(v, "model_id")};
  }
  s.fused = distribution_from_json(detail::field(j, "fused"));
  auto dom = parse_emotion(detail::text(j, "dominant"));
  if (!dom) throw Error(ErrorCode::InvalidArgument, "unknown dominant label");
  s.dominant = *dom;
  s.latency_ms = detail::number(j, "latency_ms");
  if (j.contains("failures")) s.failures = modality_error_map_from(j["failures"]);
  return s;
}

std::optional<ErrorCode> parse_error_code(std::string_view s) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::DuplicateOpenTag); ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == s) return code;
  }
  return std::nullopt;
}

json to_json(const ScoringFailure& f) {
  return json{{"segment_id", f.segment_id},
              {"reason", std::string(to_string(f.reason))},
              {"errors", modality_error_map(f.errors)},
              {"message", f.message}};
}

ScoringFailure scoring_failure_from_json(const json& j) {
  ScoringFailure f;
  f.segment_id = detail::count(j, "segment_id");
  auto code = parse_error_code(detail::text(j, "reason"));
  if (!code) throw Error(ErrorCode::InvalidArgument, "unknown failure reason");
  f.reason = *code;
  if (j.contains("errors")) f.errors = modality_error_map_from(j["errors"]);
  f.message = j.value("message", "");
  return f;
}

void validate_requirement_id(const std::string& id) {
  if (id.empty() || id.size() > kMaxRequirementIdLength) {
    throw Error(ErrorCode::InvalidArgument,
                "requirement_id must be 1..128 characters");
  }
}

json to_json(const RequirementTag& t) {
  json j{{"requirement_id", t.requirement_id},
         {"label", t.label},
         {"t_start", round_sig9(t.t_start)}};
  j["t_end"] = t.t_end ? json(round_sig9(*t.t_end)) : json(nullptr);
  return j;
}

RequirementTag requirement_tag_from_json(const json& j) {
  RequirementTag t;
  t.requirement_id = detail::text(j, "requirement_id");
  validate_requirement_id(t.requirement_id);
  t.label = j.value("label", "");
  t.t_start = detail::number(j, "t_start");
  if (j.contains("t_end") && !j["t_end"].is_null()) {
    t.t_end = detail::number(j, "t_end");
    if (!(*t.t_end > t.t_start)) {
      throw Error(ErrorCode::InvalidArgument, "tag t_end must exceed t_start");
    }
  }
  return t;
}

}  // namespace memore
