#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "memore/error.hpp"

namespace memore {

/// The closed 8-label taxonomy. Enumerator order is the tie-break order
/// used by `dominant`: the seven labels of the original listing, then
/// Surprise.
enum class EmotionLabel : std::uint8_t {
  Joy,
  Sadness,
  Anger,
  Anticipation,
  Disgust,
  Fear,
  Trust,
  Surprise,
};

inline constexpr std::size_t kEmotionCount = 8;

inline constexpr std::array<EmotionLabel, kEmotionCount> kAllEmotions = {
    EmotionLabel::Joy,     EmotionLabel::Sadness,      EmotionLabel::Anger,
    EmotionLabel::Anticipation, EmotionLabel::Disgust, EmotionLabel::Fear,
    EmotionLabel::Trust,   EmotionLabel::Surprise,
};

constexpr std::size_t index_of(EmotionLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

std::string_view to_string(EmotionLabel label) noexcept;
std::optional<EmotionLabel> parse_emotion(std::string_view name) noexcept;

enum class Modality : std::uint8_t { Video, Audio, Text };

inline constexpr std::array<Modality, 3> kAllModalities = {
    Modality::Video, Modality::Audio, Modality::Text};

std::string_view to_string(Modality m) noexcept;
/// "physiological" is a reserved name and does not parse.
std::optional<Modality> parse_modality(std::string_view name) noexcept;

/// Probability mass over the 8 labels. Always valid once constructed:
/// entries are >= 0 and sum to 1 within 1e-9.
class EmotionDistribution {
 public:
  using Mass = std::array<double, kEmotionCount>;

  static constexpr double kSumTolerance = 1e-9;

  /// Uniform mass, the no-evidence prior.
  EmotionDistribution();

  /// Validates `mass`; throws InvalidArgument when it is not a
  /// distribution within kSumTolerance.
  static EmotionDistribution from_mass(const Mass& mass);

  /// Point mass on one label.
  static EmotionDistribution certain(EmotionLabel label);

  double operator[](EmotionLabel label) const noexcept {
    return mass_[index_of(label)];
  }
  const Mass& mass() const noexcept { return mass_; }

  friend bool operator==(const EmotionDistribution&,
                         const EmotionDistribution&) = default;

 private:
  explicit EmotionDistribution(const Mass& mass) : mass_(mass) {}
  friend EmotionDistribution normalize(const Mass& raw);

  Mass mass_;
};

/// raw_i / sum(raw). Throws AllZero when every score is zero, and
/// InvalidArgument for negative or non-finite scores.
EmotionDistribution normalize(const EmotionDistribution::Mass& raw);

/// Signed positivity weight per label, each in [-1, 1].
class ValenceMap {
 public:
  /// Joy, Trust, Anticipation +1; Surprise 0; Sadness, Anger, Disgust,
  /// Fear -1.
  ValenceMap();

  static ValenceMap from_weights(const std::array<double, kEmotionCount>& w);

  double operator[](EmotionLabel label) const noexcept {
    return weights_[index_of(label)];
  }
  const std::array<double, kEmotionCount>& weights() const noexcept {
    return weights_;
  }
  ValenceMap with(EmotionLabel label, double weight) const;

 private:
  std::array<double, kEmotionCount> weights_;
};

/// Expected valence: sum over labels of d[label] * v[label].
double valence_score(const EmotionDistribution& d, const ValenceMap& v);

/// Rounds to 9 significant digits, the precision of every serialized
/// probability, time and score.
double round_sig9(double x);

/// Tolerance applied when reading a distribution back from text. Nine
/// significant digits per entry can leave the sum off by a few 1e-9.
inline constexpr double kWireSumTolerance = 1e-6;

nlohmann::json to_json(const EmotionDistribution& d);
/// Requires exactly the 8 lowercase label keys with values in [0,1]
/// summing to 1 within kWireSumTolerance; the result is rescaled to sum to
/// 1 exactly. Throws InvalidArgument with the offending key otherwise.
EmotionDistribution distribution_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ValenceMap& v);

}  // namespace memore
