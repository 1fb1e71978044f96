#include "memore/emotion.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace memore {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::NoTranscript: return "NoTranscript";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::StorageFull: return "StorageFull";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::UnsupportedModality: return "UnsupportedModality";
    case ErrorCode::PayloadUnreadable: return "PayloadUnreadable";
    case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::NoModalities: return "NoModalities";
    case ErrorCode::NoRoute: return "NoRoute";
    case ErrorCode::ScoringFailed: return "ScoringFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    case ErrorCode::EmptyAfterMapping: return "EmptyAfterMapping";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::StorageUnwritable: return "StorageUnwritable";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::SessionStillOpen: return "SessionStillOpen";
    case ErrorCode::IngestFormatError: return "IngestFormatError";
    case ErrorCode::NoOpenTag: return "NoOpenTag";
    case ErrorCode::DuplicateOpenTag: return "DuplicateOpenTag";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::string_view, kEmotionCount> kEmotionNames = {
    "joy", "sadness", "anger", "anticipation",
    "disgust", "fear", "trust", "surprise"};

constexpr std::array<std::string_view, 3> kModalityNames = {"video", "audio",
                                                            "text"};

}  // namespace

std::string_view to_string(EmotionLabel label) noexcept {
  return kEmotionNames[index_of(label)];
}

std::optional<EmotionLabel> parse_emotion(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    if (kEmotionNames[i] == name) return kAllEmotions[i];
  }
  return std::nullopt;
}

std::string_view to_string(Modality m) noexcept {
  return kModalityNames[static_cast<std::size_t>(m)];
}

std::optional<Modality> parse_modality(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kModalityNames.size(); ++i) {
    if (kModalityNames[i] == name) return kAllModalities[i];
  }
  return std::nullopt;
}

EmotionDistribution::EmotionDistribution() {
  mass_.fill(1.0 / kEmotionCount);
}

EmotionDistribution EmotionDistribution::from_mass(const Mass& mass) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    if (!std::isfinite(mass[i]) || mass[i] < 0.0 || mass[i] > 1.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "probability for '" + std::string(kEmotionNames[i]) +
                      "' outside [0,1]");
    }
    sum += mass[i];
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw Error(ErrorCode::InvalidArgument,
                "probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  return EmotionDistribution(mass);
}

EmotionDistribution EmotionDistribution::certain(EmotionLabel label) {
  Mass m{};
  m[index_of(label)] = 1.0;
  return EmotionDistribution(m);
}

EmotionDistribution normalize(const EmotionDistribution::Mass& raw) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    if (!std::isfinite(raw[i]) || raw[i] < 0.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "score for '" + std::string(kEmotionNames[i]) +
                      "' must be finite and nonnegative");
    }
    sum += raw[i];
  }
  if (sum <= 0.0) {
    throw Error(ErrorCode::AllZero, "cannot normalize an all-zero score map");
  }
  EmotionDistribution::Mass out{};
  for (std::size_t i = 0; i < kEmotionCount; ++i) out[i] = raw[i] / sum;
  return EmotionDistribution(out);
}

ValenceMap::ValenceMap()
    : weights_{+1.0, -1.0, -1.0, +1.0, -1.0, -1.0, +1.0, 0.0} {}

ValenceMap ValenceMap::from_weights(
    const std::array<double, kEmotionCount>& w) {
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    if (!std::isfinite(w[i]) || w[i] < -1.0 || w[i] > 1.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "valence for '" + std::string(kEmotionNames[i]) +
                      "' outside [-1,1]");
    }
  }
  ValenceMap v;
  v.weights_ = w;
  return v;
}

ValenceMap ValenceMap::with(EmotionLabel label, double weight) const {
  auto w = weights_;
  w[index_of(label)] = weight;
  return from_weights(w);
}

double valence_score(const EmotionDistribution& d, const ValenceMap& v) {
  double s = 0.0;
  for (auto label : kAllEmotions) s += d[label] * v[label];
  return s;
}

double round_sig9(double x) {
  if (x == 0.0) return 0.0;
  if (!std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

nlohmann::json to_json(const EmotionDistribution& d) {
  nlohmann::json j = nlohmann::json::object();
  for (auto label : kAllEmotions) {
    j[std::string(to_string(label))] = round_sig9(d[label]);
  }
  return j;
}

EmotionDistribution distribution_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::InvalidArgument, "distribution must be an object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!parse_emotion(key)) {
      throw Error(ErrorCode::InvalidArgument,
                  "unknown emotion label '" + key + "'");
    }
  }
  EmotionDistribution::Mass m{};
  double sum = 0.0;
  for (auto label : kAllEmotions) {
    const std::string key(to_string(label));
    auto it = j.find(key);
    if (it == j.end()) {
      throw Error(ErrorCode::InvalidArgument, "missing emotion label '" + key + "'");
    }
    if (!it->is_number()) {
      throw Error(ErrorCode::InvalidArgument, "label '" + key + "' is not a number");
    }
    double p = it->get<double>();
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "label '" + key + "' probability outside [0,1]");
    }
    m[index_of(label)] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > kWireSumTolerance) {
    throw Error(ErrorCode::InvalidArgument,
                "distribution sums to " + std::to_string(sum) + ", not 1");
  }
  for (auto& p : m) p /= sum;
  return EmotionDistribution::from_mass(m);
}

nlohmann::json to_json(const ValenceMap& v) {
  nlohmann::json j = nlohmann::json::object();
  for (auto label : kAllEmotions) {
    j[std::string(to_string(label))] = v[label];
  }
  return j;
}

}  // namespace memore
