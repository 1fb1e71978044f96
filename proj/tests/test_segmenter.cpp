#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "memore/clip_store.hpp"
#include "memore/media.hpp"
#include "memore/segmenter.hpp"
#include "support.hpp"

using namespace memore;

namespace {

std::vector<TimedFrame> frames_at(std::vector<double> ts) {
  std::vector<TimedFrame> out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    TimedFrame f;
    f.t = ts[i];
    Image img{2, 2, 1, std::vector<std::uint8_t>(4, static_cast<std::uint8_t>(i))};
    f.png = std::make_shared<const std::vector<std::uint8_t>>(encode_png(img));
    f.width = 2;
    f.height = 2;
    out.push_back(f);
  }
  return out;
}

AudioBlock tone(double t_start, double seconds, int rate = 16000) {
  AudioBlock b;
  b.t_start = t_start;
  b.sample_rate = rate;
  b.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < b.samples.size(); ++i)
    b.samples[i] = static_cast<std::int16_t>(3000 * std::sin(i * 0.05));
  return b;
}

}  // namespace

TEST(SegmentFixed, Examples) {
  EXPECT_EQ(segment_fixed(480, 10, 3).size(), 48u);
  EXPECT_EQ(segment_fixed(480, 60, 3).size(), 8u);
  auto w = segment_fixed(25, 10, 3);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0], (TimeWindow{0, 10}));
  EXPECT_EQ(w[1], (TimeWindow{10, 20}));
  EXPECT_EQ(w[2], (TimeWindow{20, 25}));
  EXPECT_EQ(segment_fixed(22, 10, 3).size(), 2u);
  EXPECT_TRUE(segment_fixed(2, 10, 3).empty());
}

TEST(SegmentFixed, TilingProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> T(1.0, 600.0);
  std::uniform_real_distribution<double> tail(1.0, 5.0);
  const double lengths[] = {6, 10, 15, 30, 60};
  for (int i = 0; i < 1000; ++i) {
    const double t = T(rng), L = lengths[rng() % 5], m = tail(rng);
    auto w = segment_fixed(t, L, m);
    double total = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      EXPECT_GT(w[k].duration(), 0.0);
      EXPECT_GE(w[k].duration(), m);
      EXPECT_LE(w[k].duration(), L);
      EXPECT_EQ(w[k].t_start, k == 0 ? 0.0 : w[k - 1].t_end);
      total += w[k].duration();
    }
    if (!w.empty()) {
      EXPECT_NEAR(total, w.back().t_end, 1e-9);
      EXPECT_LE(w.back().t_end, t);
      EXPECT_LT(t - w.back().t_end, m);  // anything dropped is a short tail
    } else {
      EXPECT_LT(t, m);
    }
  }
}

TEST(Resample, ThirtyToTwentyFour) {
  std::vector<double> ts;
  for (int i = 0; i < 30; ++i) ts.push_back(i / 30.0);
  auto out = resample_frames(frames_at(ts), 24);
  ASSERT_EQ(out.size(), 24u);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_DOUBLE_EQ(out[k].t, k / 24.0);
}

TEST(Resample, IdentityAtSameRate) {
  std::vector<double> ts;
  for (int i = 0; i < 24; ++i) ts.push_back(i / 24.0);
  auto in = frames_at(ts);
  auto out = resample_frames(in, 24);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t k = 0; k < in.size(); ++k) {
    EXPECT_EQ(out[k].png, in[k].png);
    EXPECT_EQ(out[k].t, in[k].t);
  }
}

TEST(Resample, NearestOfThreeBruteForce) {
  auto in = frames_at({0.0, 0.5, 1.0});
  auto out = resample_frames(in, 24);
  // grid k/24 up to the last input timestamp 1.0 inclusive
  ASSERT_EQ(out.size(), 25u);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double t = k / 24.0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < in.size(); ++i)
      if (std::abs(in[i].t - t) < std::abs(in[best].t - t)) best = i;
    EXPECT_EQ(out[k].png, in[best].png) << "k=" << k;
  }
  // k=6 sits exactly at 0.25: the tie goes to the earlier frame
  EXPECT_EQ(out[6].png, in[0].png);
}

TEST(Resample, CountProperty) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> gap(0.001, 0.2);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> ts{0.0};
    const int n = 1 + static_cast<int>(rng() % 60);
    for (int k = 1; k < n; ++k) ts.push_back(ts.back() + gap(rng));
    const double fps = 1 + static_cast<double>(rng() % 30);
    auto out = resample_frames(frames_at(ts), fps);
    EXPECT_EQ(out.size(), static_cast<std::size_t>(std::floor(ts.back() * fps + 1e-9)) + 1);
  }
  EXPECT_ERROR_CODE(resample_frames(std::vector<TimedFrame>{}, 24), ErrorCode::EmptyStream);
}

TEST(SegmentConversational, GapAndPunctuation) {
  std::vector<TranscriptSpan> spans{{0.0, 4.0, "so the login"}, {6.0, 9.5, "is slow."}};
  auto w = segment_conversational(spans, {}, 1.0, 60.0);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], (TimeWindow{0.0, 4.0}));
  EXPECT_EQ(w[1], (TimeWindow{4.0, 9.5}));
}

TEST(SegmentConversational, SingleSentence) {
  std::vector<TranscriptSpan> spans{{0.0, 5.0, "Hello."}};
  auto w = segment_conversational(spans, {}, 1.0, 60.0);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], (TimeWindow{0.0, 5.0}));
}

TEST(SegmentConversational, MonologueCap) {
  std::vector<TranscriptSpan> spans{{0.0, 200.0, "and then we went on and on and on"}};
  auto w = segment_conversational(spans, {}, 1.0, 60.0);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w[0].t_end, 60);
  EXPECT_EQ(w[1].t_end, 120);
  EXPECT_EQ(w[2].t_end, 180);
  EXPECT_EQ(w[3].t_end, 200);
}

TEST(SegmentConversational, ExtendsToAudioAndNeverExceedsCap) {
  std::vector<TranscriptSpan> spans{{0.0, 3.0, "Yes."}};
  std::vector<AudioBlock> audio{tone(0.0, 100.0)};
  auto w = segment_conversational(spans, audio, 1.0, 45.0);
  EXPECT_EQ(w.back().t_end, 100.0);
  for (const auto& x : w) EXPECT_LE(x.duration(), 45.0);
  EXPECT_ERROR_CODE(segment_conversational(std::vector<TranscriptSpan>{}, audio, 1.0, 45.0),
                    ErrorCode::NoTranscript);
}

TEST(CutSegment, ModalitiesPresent) {
  test::TempDir dir;
  ClipStore store(dir.path());
  std::vector<TimedFrame> grid;
  for (auto& f : frames_at({0, 1, 2, 3, 4, 5, 6, 7, 8, 9})) grid.push_back(f);
  std::vector<AudioBlock> audio{tone(0.0, 20.0)};
  std::vector<TranscriptSpan> text{{1.0, 3.0, "hello there"}};

  auto s0 = cut_segment(store, "s", 0, {0, 10}, grid, audio, text, 1.0);
  EXPECT_EQ(s0.modalities_present,
            (std::set<Modality>{Modality::Video, Modality::Audio, Modality::Text}));
  EXPECT_EQ(s0.frame_rate, 1.0);
  EXPECT_TRUE(std::filesystem::exists(store.segment_dir("s", 0) / "frames" / "000009.png"));
  EXPECT_EQ(decode_wav(read_file(store.segment_dir("s", 0) / "audio.wav")).samples.size(), 160000u);

  auto s1 = cut_segment(store, "s", 1, {10, 20}, grid, audio, text, 1.0);
  EXPECT_EQ(s1.modalities_present, std::set<Modality>{Modality::Audio});
  EXPECT_FALSE(s1.empty);

  auto s2 = cut_segment(store, "s", 2, {20, 25}, grid, audio, text, 1.0);
  EXPECT_TRUE(s2.empty);
  EXPECT_TRUE(s2.modalities_present.empty());
  EXPECT_EQ(s2.t_end - s2.t_start, 5.0);

  EXPECT_EQ(store.load_segment("s", 0), s0);
  EXPECT_EQ(store.load_segment("s", 2), s2);
}

TEST(CutSegment, DeterministicMetadata) {
  test::TempDir a, b;
  ClipStore sa(a.path()), sb(b.path());
  auto grid = frames_at({0, 0.5, 1.0, 1.5});
  std::vector<AudioBlock> audio{tone(0, 2)};
  auto x = cut_segment(sa, "s", 0, {0, 2}, grid, audio, {}, 2.0);
  auto y = cut_segment(sb, "s", 0, {0, 2}, grid, audio, {}, 2.0);
  EXPECT_EQ(test::read_text(sa.segment_dir("s", 0) / "meta.json"),
            test::read_text(sb.segment_dir("s", 0) / "meta.json"));
  EXPECT_EQ(test::read_text(sa.segment_dir("s", 0) / "audio.wav"),
            test::read_text(sb.segment_dir("s", 0) / "audio.wav"));
  EXPECT_EQ(x, y);
}

TEST(Segmenter, StreamingMatchesBatchWindows) {
  test::TempDir dir;
  ClipStore store(dir.path());
  SegmenterConfig cfg;
  cfg.length_s = 10;
  cfg.target_fps = 2;
  Segmenter seg(cfg, "s", store);
  std::vector<MediaSegment> got;
  for (int second = 0; second < 95; ++second) {
    seg.push(tone(second, 1.0));
    auto out = seg.poll(second + 1.0);
    got.insert(got.end(), out.begin(), out.end());
  }
  auto rest = seg.finish(95.0);
  got.insert(got.end(), rest.begin(), rest.end());
  auto want = segment_fixed(95, 10, 3);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].segment_id, i);
    EXPECT_EQ(got[i].window(), want[i]);
    EXPECT_EQ(got[i].modalities_present, std::set<Modality>{Modality::Audio});
  }
}

TEST(Segmenter, OriginShiftAndValidation) {
  test::TempDir dir;
  ClipStore store(dir.path());
  SegmenterConfig cfg;
  Segmenter seg(cfg, "s", store, 5, 100.0);
  seg.push(tone(100.0, 20.0));
  auto out = seg.finish(120.0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].segment_id, 5u);
  EXPECT_EQ(out[0].window(), (TimeWindow{100, 110}));
  EXPECT_ERROR_CODE(seg.push(tone(120.0, 1.0)), ErrorCode::SessionClosed);

  Segmenter other(cfg, "t", store);
  EXPECT_ERROR_CODE(other.push(tone(0, 1, 22050)), ErrorCode::IngestFormatError);
  cfg.min_tail_s = cfg.length_s;
  EXPECT_ERROR_CODE(cfg.validate(), ErrorCode::InvalidConfig);
}

TEST(Segmenter, ConversationalStreaming) {
  test::TempDir dir;
  ClipStore store(dir.path());
  SegmenterConfig cfg;
  cfg.mode = SegmentationMode::Conversational;
  Segmenter seg(cfg, "s", store);
  seg.push(TranscriptSpan{0.0, 4.0, "so the login"});
  seg.push(TranscriptSpan{6.0, 9.5, "is slow."});
  seg.push(TranscriptSpan{10.0, 12.0, "Right"});
  auto early = seg.poll(12.0);
  ASSERT_EQ(early.size(), 2u);
  EXPECT_EQ(early[1].window(), (TimeWindow{4.0, 9.5}));
  auto rest = seg.finish(12.0);
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest[0].window(), (TimeWindow{9.5, 12.0}));
}
