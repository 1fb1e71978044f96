#pragma once

#include <map>

#include "memore/emotion.hpp"
#include "memore/records.hpp"

namespace memore {

enum class FusionRule { LogLinear, Linear };

std::string_view to_string(FusionRule rule) noexcept;
std::optional<FusionRule> parse_fusion_rule(std::string_view s) noexcept;

struct FusionConfig {
  FusionRule rule = FusionRule::LogLinear;
  /// Per-modality weights. A joint audiovisual input is weighted by
  /// video + audio.
  std::map<Modality, double> weights = {
      {Modality::Video, 0.4}, {Modality::Audio, 0.4}, {Modality::Text, 0.2}};
  double epsilon = 1e-6;

  /// Throws InvalidConfig unless weights are finite and nonnegative with at
  /// least one positive, and epsilon is in (0, 1e-3].
  void validate() const;
  double weight_of(Channel c) const;
};

/// Late fusion of per-channel distributions.
///
/// Weights of the present channels are renormalized to sum to 1 (equal
/// weights when every present channel has weight 0). Each input is clamped
/// to >= epsilon and renormalized. The log-linear rule returns the
/// normalized weighted geometric mean; the linear rule the weighted
/// arithmetic mean. Throws NoModalities on empty input.
EmotionDistribution fuse(const std::map<Channel, EmotionDistribution>& inputs,
                         const FusionConfig& cfg);

/// Argmax label; exact ties go to the label earliest in the taxonomy order.
EmotionLabel dominant(const EmotionDistribution& d) noexcept;

}  // namespace memore
