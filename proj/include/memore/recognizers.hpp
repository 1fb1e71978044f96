#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>

#include "memore/clip_store.hpp"
#include "memore/media.hpp"
#include "memore/records.hpp"

namespace memore {

enum class RecognizerKind { Reference, Playback, Remote };

std::string_view to_string(RecognizerKind k) noexcept;
std::optional<RecognizerKind> parse_recognizer_kind(std::string_view s) noexcept;

struct RecognizerDescriptor {
  std::string model_id;
  /// Modalities the recognizer accepts.
  std::set<Modality> modalities;
  RecognizerKind kind = RecognizerKind::Reference;
  std::optional<std::string> endpoint;

  /// Throws InvalidConfig: nonempty model_id and modalities, endpoint iff
  /// Remote.
  void validate() const;
};

/// Result of one recognizer call over a set of modalities: successful
/// channels plus per-modality failures.
struct ScoreOutcome {
  std::map<Channel, ChannelScore> scores;
  std::map<Modality, Error> failures;
};

/// "<ErrorCode>: message", the form failures take in events and reports.
std::string describe(const Error& e);

class Recognizer {
 public:
  explicit Recognizer(RecognizerDescriptor descriptor);
  virtual ~Recognizer() = default;

  const RecognizerDescriptor& descriptor() const noexcept { return descriptor_; }

  /// Scores every requested modality. The default scores modalities one at
  /// a time and records each failure separately.
  virtual ScoreOutcome score(const MediaSegment& segment,
                             const std::set<Modality>& modalities) const;

  /// Single-modality scoring; throws UnsupportedModality when the
  /// recognizer does not accept `modality` or the segment lacks it.
  ChannelScore score(const MediaSegment& segment, Modality modality) const;

  /// Liveness probe used by the registry; local recognizers are always up.
  virtual bool probe() const { return true; }

 protected:
  void check_supported(const MediaSegment& segment, Modality modality) const;
  virtual EmotionDistribution score_modality(const MediaSegment& segment,
                                             Modality modality) const = 0;

 private:
  RecognizerDescriptor descriptor_;
};

// ---------------------------------------------------------------------------
// Playback

/// Pre-scored distributions keyed by "<session_id>/<segment_id>" or by clip
/// locator. Each entry holds one distribution per channel.
class PlaybackManifest {
 public:
  using Entry = std::map<Channel, EmotionDistribution>;

  PlaybackManifest() = default;
  explicit PlaybackManifest(std::map<std::string, Entry> entries);

  static PlaybackManifest from_json(const nlohmann::json& j);
  static PlaybackManifest load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const Entry* find(const std::string& key) const;
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

class PlaybackRecognizer final : public Recognizer {
 public:
  PlaybackRecognizer(RecognizerDescriptor descriptor,
                     std::shared_ptr<const PlaybackManifest> manifest);

  /// A joint "audiovisual" entry answers a request for both video and
  /// audio as one channel.
  ScoreOutcome score(const MediaSegment& segment,
                     const std::set<Modality>& modalities) const override;

  using Recognizer::score;

 protected:
  EmotionDistribution score_modality(const MediaSegment& segment,
                                     Modality modality) const override;

 private:
  const PlaybackManifest::Entry& entry_for(const MediaSegment& segment) const;
  std::shared_ptr<const PlaybackManifest> manifest_;
};

// ---------------------------------------------------------------------------
// Reference text recognizer

/// Token -> per-label hit counts. File format: TSV with a header line
/// `token joy sadness anger anticipation disgust fear trust surprise`.
class Lexicon {
 public:
  using Counts = std::array<unsigned, kEmotionCount>;

  static Lexicon parse(std::string_view tsv);
  static Lexicon load(const std::filesystem::path& path);
  /// data/lexicon.tsv from the source tree.
  static const Lexicon& bundled();

  const Counts* find(std::string_view token) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::unordered_map<std::string, Counts> entries_;
};

inline constexpr double kLexiconSmoothing = 0.125;

/// Lowercased ASCII tokens: maximal runs of letters, digits and apostrophes.
std::vector<std::string> tokenize(std::string_view text);

/// (hits_label + 0.125) / (total_hits + 1) over lexicon hits of the
/// lowercased tokens. No hits gives the uniform distribution.
EmotionDistribution reference_text_score(std::string_view text, const Lexicon& lexicon);

// ---------------------------------------------------------------------------
// Reference audio / video recognizers

enum class ArousalBucket { Low, Mid, High };

std::string_view to_string(ArousalBucket b) noexcept;

/// Bundled prior per arousal bucket.
const EmotionDistribution& arousal_prior(ArousalBucket b);

struct AudioFeatures {
  /// Root mean square of samples scaled to [-1, 1).
  double rms = 0.0;
  /// Fraction of adjacent sample pairs whose sign differs (0 counts as
  /// positive).
  double zcr = 0.0;
};

namespace audio_thresholds {
inline constexpr double kLowRms = 0.03;      // about -30 dBFS
inline constexpr double kHighRms = 0.25;     // about -12 dBFS
inline constexpr double kBrightRms = 0.08;   // about -22 dBFS
inline constexpr double kBrightZcr = 0.30;
inline constexpr double kMinDurationS = 0.5;
}  // namespace audio_thresholds

AudioFeatures audio_features(std::span<const std::int16_t> samples);
/// rms < kLowRms -> Low; rms >= kHighRms, or rms >= kBrightRms with
/// zcr >= kBrightZcr -> High; otherwise Mid.
ArousalBucket audio_arousal(const AudioFeatures& f);

/// Throws TooShort for less than 0.5 s of audio.
EmotionDistribution reference_audio_score(std::span<const std::int16_t> samples, int sample_rate);

namespace video_thresholds {
inline constexpr double kLowMotion = 0.01;
inline constexpr double kHighMotion = 0.06;
}  // namespace video_thresholds

/// Mean absolute gray-level change between consecutive frames, in [0,1].
/// A single frame has zero motion. Frames must share dimensions.
double motion_energy(std::span<const Image> frames);
ArousalBucket video_arousal(double motion);

/// Deterministic baseline for every modality: lexicon counting for text,
/// RMS/ZCR arousal for audio, motion-energy arousal for video. Reads the
/// payloads from the clip store.
class ReferenceRecognizer final : public Recognizer {
 public:
  ReferenceRecognizer(RecognizerDescriptor descriptor, const ClipStore& store,
                      std::shared_ptr<const Lexicon> lexicon);

 protected:
  EmotionDistribution score_modality(const MediaSegment& segment,
                                     Modality modality) const override;

 private:
  const ClipStore& store_;
  std::shared_ptr<const Lexicon> lexicon_;
};

}  // namespace memore
