#include "memore/protocol.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include <cmath>

namespace memore::protocol {

using nlohmann::json;

std::string_view error_code(Violation v) noexcept {
  switch (v) {
    case Violation::InvalidJson: return "invalid_json";
    case Violation::MissingField: return "missing_field";
    case Violation::WrongType: return "wrong_type";
    case Violation::UnknownField: return "unknown_field";
    case Violation::UnsupportedVersion: return "unsupported_version";
    case Violation::EmptyModalities: return "empty_modalities";
    case Violation::BadDistribution: return "bad_distribution";
    case Violation::BadSum: return "bad_sum";
    case Violation::SegmentMismatch: return "segment_mismatch";
    case Violation::PayloadTooLarge: return "payload_too_large";
  }
  return "unknown";
}

namespace {

[[noreturn]] void violate(Violation v, const std::string& msg) { throw ProtocolError(v, msg); }

void expect_object(const json& j, const std::string& where) {
  if (!j.is_object()) violate(Violation::WrongType, where + " must be an object");
}

void only_keys(const json& j, std::initializer_list<std::string_view> allowed,
               const std::string& where) {
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) violate(Violation::UnknownField, "unknown field '" + where + k + "'");
  }
}

const json& need(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) violate(Violation::MissingField, "missing field '" + where + key + "'");
  return *it;
}

std::string need_string(const json& j, const char* key, const std::string& where,
                        bool nonempty = false) {
  const auto& v = need(j, key, where);
  if (!v.is_string()) violate(Violation::WrongType, "'" + where + key + "' must be a string");
  auto s = v.get<std::string>();
  if (nonempty && s.empty()) violate(Violation::WrongType, "'" + where + key + "' must be nonempty");
  return s;
}

std::uint64_t need_count(const json& j, const char* key, const std::string& where) {
  const auto& v = need(j, key, where);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  violate(Violation::WrongType, "'" + where + key + "' must be a nonnegative integer");
}

double need_number(const json& j, const char* key, const std::string& where) {
  const auto& v = need(j, key, where);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    violate(Violation::WrongType, "'" + where + key + "' must be a finite number");
  }
  return v.get<double>();
}

void check_version(const json& j) {
  const auto& v = need(j, "protocol_version", "");
  if (!v.is_number_integer()) violate(Violation::WrongType, "'protocol_version' must be an integer");
  if (v.get<std::int64_t>() != kProtocolVersion) {
    violate(Violation::UnsupportedVersion,
            "protocol_version " + v.dump() + " is not supported (expected 1)");
  }
}

EmotionDistribution need_distribution(const json& j, const std::string& where) {
  if (!j.is_object()) violate(Violation::WrongType, where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!parse_emotion(k)) violate(Violation::BadDistribution, "unknown label '" + where + "." + k + "'");
  }
  EmotionDistribution::Mass m{};
  double sum = 0.0;
  for (auto label : kAllEmotions) {
    const std::string key(to_string(label));
    auto it = j.find(key);
    if (it == j.end()) violate(Violation::BadDistribution, "missing label '" + where + "." + key + "'");
    if (!it->is_number()) violate(Violation::WrongType, "'" + where + "." + key + "' must be a number");
    const double p = it->get<double>();
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      violate(Violation::BadDistribution, "'" + where + "." + key + "' outside [0,1]");
    }
    m[index_of(label)] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > kWireSumTolerance) {
    violate(Violation::BadSum, where + " sums to " + std::to_string(sum) + ", not 1");
  }
  return distribution_from_json(j);
}

json parse_text(std::string_view body) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) violate(Violation::InvalidJson, "body is not valid JSON");
  return j;
}

}  // namespace

std::set<Modality> ScoreRequest::modalities() const {
  std::set<Modality> out;
  if (video) out.insert(Modality::Video);
  if (audio) out.insert(Modality::Audio);
  if (text) out.insert(Modality::Text);
  return out;
}

json to_json(const ScoreRequest& r) {
  json mods = json::object();
  if (r.video) {
    mods["video"] = json{{"frames_uri", r.video->frames_uri},
                         {"frame_count", r.video->frame_count},
                         {"fps", round_sig9(r.video->fps)}};
  }
  if (r.audio) {
    json a{{"sample_rate", r.audio->sample_rate}};
    if (r.audio->wav_uri) a["wav_uri"] = *r.audio->wav_uri;
    if (r.audio->wav_base64) a["wav_base64"] = *r.audio->wav_base64;
    mods["audio"] = std::move(a);
  }
  if (r.text) mods["text"] = json{{"content", r.text->content}};
  return json{{"protocol_version", kProtocolVersion},
              {"session_id", r.session_id},
              {"segment_id", r.segment_id},
              {"modalities", std::move(mods)}};
}

json to_json(const ScoreResponse& r) {
  json d = json::object();
  for (const auto& [c, dist] : r.distributions) d[std::string(to_string(c))] = memore::to_json(dist);
  return json{{"protocol_version", kProtocolVersion},
              {"segment_id", r.segment_id},
              {"model_id", r.model_id},
              {"distributions", std::move(d)},
              {"latency_ms", round_sig9(r.latency_ms)}};
}

json to_json(const HealthResponse& r) {
  json mods = json::array();
  for (auto m : r.modalities) mods.push_back(std::string(to_string(m)));
  return json{{"status", r.status}, {"model_id", r.model_id}, {"modalities", std::move(mods)}};
}

ScoreRequest parse_request(const json& j) {
  expect_object(j, "request");
  only_keys(j, {"protocol_version", "session_id", "segment_id", "modalities"}, "");
  check_version(j);
  ScoreRequest r;
  r.session_id = need_string(j, "session_id", "", true);
  r.segment_id = need_count(j, "segment_id", "");
  const auto& mods = need(j, "modalities", "");
  expect_object(mods, "modalities");
  only_keys(mods, {"video", "audio", "text"}, "modalities.");
  if (mods.empty()) violate(Violation::EmptyModalities, "modalities must name at least one modality");

  if (auto it = mods.find("video"); it != mods.end()) {
    expect_object(*it, "modalities.video");
    only_keys(*it, {"frames_uri", "frame_count", "fps"}, "modalities.video.");
    VideoPayload v;
    v.frames_uri = need_string(*it, "frames_uri", "modalities.video.", true);
    v.frame_count = need_count(*it, "frame_count", "modalities.video.");
    v.fps = need_number(*it, "fps", "modalities.video.");
    if (!(v.fps > 0.0)) violate(Violation::WrongType, "'modalities.video.fps' must be > 0");
    r.video = std::move(v);
  }
  if (auto it = mods.find("audio"); it != mods.end()) {
    expect_object(*it, "modalities.audio");
    only_keys(*it, {"wav_uri", "wav_base64", "sample_rate"}, "modalities.audio.");
    AudioPayload a;
    a.sample_rate = static_cast<int>(need_count(*it, "sample_rate", "modalities.audio."));
    const bool has_uri = it->contains("wav_uri");
    const bool has_inline = it->contains("wav_base64");
    if (has_uri == has_inline) {
      violate(has_uri ? Violation::WrongType : Violation::MissingField,
              "'modalities.audio' needs exactly one of wav_uri, wav_base64");
    }
    if (has_uri) a.wav_uri = need_string(*it, "wav_uri", "modalities.audio.", true);
    if (has_inline) {
      a.wav_base64 = need_string(*it, "wav_base64", "modalities.audio.");
      if (base64_decode(*a.wav_base64).size() >= kMaxInlineBytes) {
        violate(Violation::PayloadTooLarge, "inline audio must be under 1 MiB");
      }
    }
    r.audio = std::move(a);
  }
  if (auto it = mods.find("text"); it != mods.end()) {
    expect_object(*it, "modalities.text");
    only_keys(*it, {"content"}, "modalities.text.");
    r.text = TextPayload{need_string(*it, "content", "modalities.text.")};
  }
  return r;
}

ScoreResponse parse_response(const json& j) {
  expect_object(j, "response");
  only_keys(j, {"protocol_version", "segment_id", "model_id", "distributions", "latency_ms"}, "");
  check_version(j);
  ScoreResponse r;
  r.segment_id = need_count(j, "segment_id", "");
  r.model_id = need_string(j, "model_id", "", true);
  const auto& dists = need(j, "distributions", "");
  expect_object(dists, "distributions");
  if (dists.empty()) violate(Violation::EmptyModalities, "distributions must not be empty");
  for (const auto& [k, v] : dists.items()) {
    auto c = parse_channel(k);
    if (!c) violate(Violation::UnknownField, "unknown field 'distributions." + k + "'");
    r.distributions.emplace(*c, need_distribution(v, "distributions." + k));
  }
  r.latency_ms = need_number(j, "latency_ms", "");
  if (r.latency_ms < 0.0) violate(Violation::WrongType, "'latency_ms' must be >= 0");
  return r;
}

HealthResponse parse_health(const json& j) {
  expect_object(j, "health");
  HealthResponse h;
  h.status = need_string(j, "status", "", true);
  h.model_id = j.contains("model_id") ? need_string(j, "model_id", "") : std::string();
  if (j.contains("modalities")) {
    const auto& mods = j["modalities"];
    if (!mods.is_array()) violate(Violation::WrongType, "'modalities' must be an array");
    for (const auto& m : mods) {
      if (!m.is_string()) violate(Violation::WrongType, "'modalities' entries must be strings");
      if (auto parsed = parse_modality(m.get<std::string>())) h.modalities.insert(*parsed);
    }
  }
  return h;
}

ScoreRequest parse_request_text(std::string_view body) { return parse_request(parse_text(body)); }
ScoreResponse parse_response_text(std::string_view body) { return parse_response(parse_text(body)); }

std::string canonical(const json& j) { return j.dump(2) + "\n"; }

json error_body(const ProtocolError& e) {
  return json{{"error_code", std::string(e.error_code())}, {"message", e.what()}};
}

std::string base64_encode(std::string_view bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) violate(Violation::WrongType, "base64 length must be a multiple of 4");
  auto body = text;
  for (int i = 0; i < 2 && !body.empty() && body.back() == '='; ++i) body.remove_suffix(1);
  std::string out(b64::decoded_size(text.size()), '\0');
  auto [written, read] = b64::decode(out.data(), body.data(), body.size());
  if (read != body.size()) violate(Violation::WrongType, "malformed base64 payload");
  out.resize(written);
  return out;
}

}  // namespace memore::protocol
