#include <cmath>

#include <gtest/gtest.h>

#include "memore/clip_store.hpp"
#include "memore/fusion.hpp"
#include "memore/media.hpp"
#include "memore/recognizers.hpp"
#include "memore/segmenter.hpp"
#include "support.hpp"

using namespace memore;

namespace {

const char* kTinyLexicon =
    "token\tjoy\tsadness\tanger\tanticipation\tdisgust\tfear\ttrust\tsurprise\n"
    "happy\t1\t0\t0\t0\t0\t0\t0\t0\n"
    "scared\t0\t0\t0\t0\t0\t1\t0\t0\n"
    "furious\t0\t0\t1\t0\t0\t0\t0\t0\n";

/// Independent arousal table: the published thresholds applied to features
/// computed here, not by the library.
ArousalBucket oracle_bucket(const std::vector<std::int16_t>& s) {
  double sq = 0;
  for (auto x : s) sq += (x / 32768.0) * (x / 32768.0);
  const double rms = std::sqrt(sq / s.size());
  int flips = 0;
  for (std::size_t i = 1; i < s.size(); ++i) flips += (s[i - 1] < 0) != (s[i] < 0);
  const double zcr = static_cast<double>(flips) / (s.size() - 1);
  if (rms < 0.03) return ArousalBucket::Low;
  if (rms >= 0.25 || (rms >= 0.08 && zcr >= 0.30)) return ArousalBucket::High;
  return ArousalBucket::Mid;
}

}  // namespace

TEST(Lexicon, Tokenize) {
  EXPECT_EQ(tokenize("This is AMAZING, I love it!"),
            (std::vector<std::string>{"this", "is", "amazing", "i", "love", "it"}));
  EXPECT_EQ(tokenize("don't-stop 42x"), (std::vector<std::string>{"don't", "stop", "42x"}));
  EXPECT_TRUE(tokenize("  ,,  ").empty());
}

TEST(Lexicon, Bundled) {
  const auto& lex = Lexicon::bundled();
  EXPECT_GE(lex.size(), 150u);
  ASSERT_NE(lex.find("amazing"), nullptr);
  EXPECT_EQ(lex.find("zzzz"), nullptr);
}

TEST(Lexicon, ParseErrors) {
  EXPECT_ERROR_CODE(Lexicon::parse("token\tjoy\n"), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(Lexicon::parse(std::string(kTinyLexicon) + "bad\t1\t2\n"), ErrorCode::InvalidArgument);
}

TEST(TextRecognizer, TwoJoyHits) {
  auto lex = Lexicon::parse(kTinyLexicon);
  auto d = reference_text_score("happy, so HAPPY", lex);
  EXPECT_NEAR(d[EmotionLabel::Joy], 2.125 / 3.0, 1e-12);
  EXPECT_NEAR(d[EmotionLabel::Joy], 0.708, 1e-3);
  EXPECT_NEAR(d[EmotionLabel::Fear], 0.125 / 3.0, 1e-12);
}

TEST(TextRecognizer, FearAndAnger) {
  auto lex = Lexicon::parse(kTinyLexicon);
  auto d = reference_text_score("scared and furious", lex);
  EXPECT_NEAR(d[EmotionLabel::Fear], 0.375, 1e-12);
  EXPECT_NEAR(d[EmotionLabel::Anger], 0.375, 1e-12);
  EXPECT_NEAR(d[EmotionLabel::Trust], 0.125 / 3.0, 1e-12);
}

TEST(TextRecognizer, NoHitsIsUniform) {
  EXPECT_EQ(reference_text_score("", Lexicon::bundled()), EmotionDistribution());
  EXPECT_EQ(reference_text_score("the table is brown", Lexicon::parse(kTinyLexicon)),
            EmotionDistribution());
}

TEST(TextRecognizer, BundledExampleArgmaxJoy) {
  auto d = reference_text_score("This is amazing, I love it", Lexicon::bundled());
  EXPECT_EQ(dominant(d), EmotionLabel::Joy);
}

TEST(AudioRecognizer, SilenceIsLow) {
  std::vector<std::int16_t> silence(16000, 0);
  EXPECT_EQ(reference_audio_score(silence, 16000), arousal_prior(ArousalBucket::Low));
}

TEST(AudioRecognizer, FullScaleSquareIsHigh) {
  std::vector<std::int16_t> square(16000);
  for (std::size_t i = 0; i < square.size(); ++i) square[i] = (i / 40) % 2 ? 32767 : -32768;
  EXPECT_EQ(audio_arousal(audio_features(square)), ArousalBucket::High);
  EXPECT_EQ(reference_audio_score(square, 16000), arousal_prior(ArousalBucket::High));
}

TEST(AudioRecognizer, NoiseAtMinus20dBFSMatchesOracle) {
  // Uniform noise scaled so RMS = 0.1 (-20 dBFS): amplitude 0.1 * sqrt(3).
  std::uint32_t state = 99;
  std::vector<std::int16_t> noise(16000);
  for (auto& x : noise) {
    state = state * 1664525u + 1013904223u;
    const double u = (state >> 8) / 16777216.0 * 2.0 - 1.0;
    x = static_cast<std::int16_t>(std::lround(u * 0.1 * std::sqrt(3.0) * 32767));
  }
  const auto want = oracle_bucket(noise);
  EXPECT_EQ(want, ArousalBucket::High);
  EXPECT_EQ(reference_audio_score(noise, 16000), arousal_prior(want));
  EXPECT_NEAR(audio_features(noise).rms, 0.1, 0.005);
}

TEST(AudioRecognizer, TooShort) {
  std::vector<std::int16_t> clip(7999, 0);
  EXPECT_ERROR_CODE(reference_audio_score(clip, 16000), ErrorCode::TooShort);
}

TEST(VideoRecognizer, MotionEnergy) {
  Image a{2, 1, 1, {0, 0}};
  Image b{2, 1, 1, {255, 0}};
  EXPECT_EQ(motion_energy(std::vector<Image>{a}), 0.0);
  EXPECT_NEAR(motion_energy(std::vector<Image>{a, b, a}), 0.5, 1e-6);
  EXPECT_EQ(video_arousal(0.0), ArousalBucket::Low);
  EXPECT_EQ(video_arousal(0.03), ArousalBucket::Mid);
  EXPECT_EQ(video_arousal(0.5), ArousalBucket::High);
}

TEST(ReferenceRecognizer, ScoresClipStorePayloads) {
  test::TempDir dir;
  ClipStore store(dir.path());
  std::vector<TimedFrame> grid;
  for (int i = 0; i < 4; ++i) {
    Image img{4, 4, 1, std::vector<std::uint8_t>(16, static_cast<std::uint8_t>(i % 2 ? 255 : 0))};
    grid.push_back({i * 0.5, std::make_shared<const std::vector<std::uint8_t>>(encode_png(img)), 4, 4});
  }
  AudioBlock silence{0.0, 16000, std::vector<std::int16_t>(32000, 0)};
  std::vector<TranscriptSpan> text{{0.0, 1.0, "I am scared"}};
  auto seg = cut_segment(store, "s", 0, {0, 2}, grid, std::vector<AudioBlock>{silence}, text, 2.0);

  RecognizerDescriptor desc{"ref", {Modality::Video, Modality::Audio, Modality::Text},
                            RecognizerKind::Reference, std::nullopt};
  ReferenceRecognizer rec(desc, store, std::make_shared<Lexicon>(Lexicon::parse(kTinyLexicon)));
  auto out = rec.score(seg, seg.modalities_present);
  EXPECT_TRUE(out.failures.empty());
  ASSERT_EQ(out.scores.size(), 3u);
  EXPECT_EQ(out.scores.at(Channel::Video).distribution, arousal_prior(ArousalBucket::High));
  EXPECT_EQ(out.scores.at(Channel::Audio).distribution, arousal_prior(ArousalBucket::Low));
  EXPECT_EQ(dominant(out.scores.at(Channel::Text).distribution), EmotionLabel::Fear);
  EXPECT_EQ(out.scores.at(Channel::Text).model_id, "ref");

  // pure function of the bytes
  auto again = rec.score(seg, seg.modalities_present);
  EXPECT_EQ(again.scores, out.scores);

  // missing payload is a per-modality failure
  std::filesystem::remove(store.segment_dir("s", 0) / "audio.wav");
  auto partial = rec.score(seg, seg.modalities_present);
  EXPECT_EQ(partial.scores.size(), 2u);
  ASSERT_EQ(partial.failures.count(Modality::Audio), 1u);
  EXPECT_EQ(partial.failures.at(Modality::Audio).code(), ErrorCode::PayloadUnreadable);
}

TEST(ReferenceRecognizer, UnsupportedModality) {
  test::TempDir dir;
  ClipStore store(dir.path());
  MediaSegment seg;
  seg.session_id = "s";
  seg.modalities_present = {Modality::Text};
  seg.payload_refs[Modality::Text] = "s/0/transcript.txt";
  RecognizerDescriptor desc{"audio-only", {Modality::Audio}, RecognizerKind::Reference, std::nullopt};
  ReferenceRecognizer rec(desc, store, std::make_shared<Lexicon>(Lexicon::bundled()));
  EXPECT_ERROR_CODE(rec.score(seg, Modality::Text), ErrorCode::UnsupportedModality);
  EXPECT_ERROR_CODE(rec.score(seg, Modality::Audio), ErrorCode::UnsupportedModality);
}

TEST(Descriptor, Validate) {
  RecognizerDescriptor d{"x", {}, RecognizerKind::Reference, std::nullopt};
  EXPECT_ERROR_CODE(d.validate(), ErrorCode::InvalidConfig);
  d.modalities = {Modality::Text};
  EXPECT_NO_THROW(d.validate());
  d.kind = RecognizerKind::Remote;
  EXPECT_ERROR_CODE(d.validate(), ErrorCode::InvalidConfig);
  d.endpoint = "http://127.0.0.1:1";
  EXPECT_NO_THROW(d.validate());
}

TEST(Playback, VerbatimLookup) {
  std::mt19937_64 rng(5);
  auto v = test::random_distribution(rng);
  auto av = test::random_distribution(rng);
  auto manifest = std::make_shared<PlaybackManifest>(std::map<std::string, PlaybackManifest::Entry>{
      {"sess/3", {{Channel::Video, v}}}, {"sess/4", {{Channel::AudioVisual, av}}}});
  RecognizerDescriptor desc{"pb", {Modality::Video, Modality::Audio}, RecognizerKind::Playback,
                            std::nullopt};
  PlaybackRecognizer rec(desc, manifest);
  MediaSegment seg;
  seg.session_id = "sess";
  seg.segment_id = 3;
  seg.modalities_present = {Modality::Video};
  EXPECT_EQ(rec.score(seg, Modality::Video).distribution, v);

  seg.segment_id = 4;
  seg.modalities_present = {Modality::Video, Modality::Audio};
  auto out = rec.score(seg, seg.modalities_present);
  ASSERT_EQ(out.scores.size(), 1u);
  EXPECT_EQ(out.scores.at(Channel::AudioVisual).distribution, av);

  seg.segment_id = 9;
  auto missing = rec.score(seg, seg.modalities_present);
  EXPECT_TRUE(missing.scores.empty());
  EXPECT_EQ(missing.failures.size(), 2u);
}

TEST(Playback, JsonRoundTrip) {
  auto m = PlaybackManifest::load(test::data_dir() / "fixtures" / "classes" / "playback.json");
  EXPECT_EQ(m.entries().size(), 52u);
  auto again = PlaybackManifest::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(again.entries(), m.entries());
  EXPECT_ERROR_CODE(PlaybackManifest::from_json(nlohmann::json::parse(R"({"a":{"smell":{}}})")),
                    ErrorCode::InvalidArgument);
}
