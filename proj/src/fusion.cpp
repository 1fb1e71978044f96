#include "memore/fusion.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace memore {

std::string_view to_string(FusionRule rule) noexcept {
  return rule == FusionRule::LogLinear ? "loglinear" : "linear";
}

std::optional<FusionRule> parse_fusion_rule(std::string_view s) noexcept {
  if (s == "loglinear") return FusionRule::LogLinear;
  if (s == "linear") return FusionRule::Linear;
  return std::nullopt;
}

void FusionConfig::validate() const {
  bool any_positive = false;
  for (const auto& [m, w] : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::InvalidConfig,
                  "fusion.weights." + std::string(to_string(m)) + " must be >= 0");
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) {
    throw Error(ErrorCode::InvalidConfig, "fusion.weights needs at least one weight > 0");
  }
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw Error(ErrorCode::InvalidConfig, "fusion.epsilon must be in (0, 1e-3]");
  }
}

double FusionConfig::weight_of(Channel c) const {
  double w = 0.0;
  for (auto m : modalities_of(c)) {
    auto it = weights.find(m);
    if (it != weights.end()) w += it->second;
  }
  return w;
}

namespace {

EmotionDistribution::Mass clamp_floor(const EmotionDistribution& d, double eps) {
  EmotionDistribution::Mass m = d.mass();
  double sum = 0.0;
  for (auto& p : m) {
    p = std::max(p, eps);
    sum += p;
  }
  for (auto& p : m) p /= sum;
  return m;
}

}  // namespace

EmotionDistribution fuse(const std::map<Channel, EmotionDistribution>& inputs,
                         const FusionConfig& cfg) {
  if (inputs.empty()) {
    throw Error(ErrorCode::NoModalities, "fusion needs at least one modality");
  }

  std::vector<double> weights;
  std::vector<EmotionDistribution::Mass> clamped;
  weights.reserve(inputs.size());
  clamped.reserve(inputs.size());
  double total = 0.0;
  for (const auto& [channel, dist] : inputs) {
    double w = cfg.weight_of(channel);
    weights.push_back(w);
    total += w;
    clamped.push_back(clamp_floor(dist, cfg.epsilon));
  }
  for (auto& w : weights) w = total > 0.0 ? w / total : 1.0 / weights.size();

  EmotionDistribution::Mass out{};
  if (cfg.rule == FusionRule::Linear) {
    for (std::size_t k = 0; k < clamped.size(); ++k) {
      for (std::size_t i = 0; i < kEmotionCount; ++i) out[i] += weights[k] * clamped[k][i];
    }
    return normalize(out);
  }

  // Weighted geometric mean in log space, shifted by the max before exp.
  EmotionDistribution::Mass logs{};
  for (std::size_t k = 0; k < clamped.size(); ++k) {
    if (weights[k] == 0.0) continue;
    for (std::size_t i = 0; i < kEmotionCount; ++i) {
      logs[i] += weights[k] * std::log(clamped[k][i]);
    }
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double l : logs) peak = std::max(peak, l);
  for (std::size_t i = 0; i < kEmotionCount; ++i) out[i] = std::exp(logs[i] - peak);
  return normalize(out);
}

EmotionLabel dominant(const EmotionDistribution& d) noexcept {
  EmotionLabel best = kAllEmotions[0];
  for (auto label : kAllEmotions) {
    if (d[label] > d[best]) best = label;
  }
  return best;
}

}  // namespace memore
