#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memore/clip_store.hpp"
#include "memore/records.hpp"

namespace memore {

struct TimedFrame {
  double t = 0.0;
  /// Encoded PNG bytes, shared so resampling can repeat a frame for free.
  std::shared_ptr<const std::vector<std::uint8_t>> png;
  int width = 0;
  int height = 0;
};

struct AudioBlock {
  double t_start = 0.0;
  int sample_rate = 16000;
  std::vector<std::int16_t> samples;

  double t_end() const noexcept {
    return t_start + static_cast<double>(samples.size()) / sample_rate;
  }
};

bool is_supported_sample_rate(int hz) noexcept;

struct TranscriptSpan {
  double t_start = 0.0;
  double t_end = 0.0;
  std::string text;
};

struct SegmenterConfig {
  SegmentationMode mode = SegmentationMode::Fixed;
  double length_s = 10.0;
  double min_tail_s = 3.0;
  double target_fps = 24.0;
  double pause_threshold_s = 1.0;
  double max_segment_s = 60.0;

  /// Throws InvalidConfig: length_s in [1,300], 0 <= min_tail_s < length_s,
  /// target_fps > 0, pause_threshold_s > 0, max_segment_s > 0.
  void validate() const;
};

/// Index of the frame whose timestamp is nearest to `t` (ties go to the
/// earlier frame). `frames` must be nonempty and time-ordered.
std::size_t nearest_frame(std::span<const TimedFrame> frames, double t);

/// Nearest-timestamp resampling onto the grid k / target_fps, k = 0, 1, ...
/// up to the last input timestamp. Output frames carry the grid time.
/// Throws EmptyStream on empty input.
std::vector<TimedFrame> resample_frames(std::span<const TimedFrame> frames, double target_fps);

/// Windows [0,L), [L,2L), ... over a session of `duration_s`. A trailing
/// partial window is kept iff it lasts at least min_tail_s.
std::vector<TimeWindow> segment_fixed(double duration_s, double length_s, double min_tail_s);

/// Sentence/pause segmentation. Boundaries sit at the end of any span
/// followed by a gap >= pause_threshold_s and at the end of any span whose
/// text ends in . ? or !; any window longer than max_segment_s is split
/// every max_segment_s. Windows tile [0, end) where end is the later of the
/// last span end and the last audio sample. Throws NoTranscript when
/// `transcript` is empty.
std::vector<TimeWindow> segment_conversational(std::span<const TranscriptSpan> transcript,
                                               std::span<const AudioBlock> audio,
                                               double pause_threshold_s, double max_segment_s);

/// Materializes one window into the clip store. `grid_frames` are frames
/// already on the target_fps grid (see resample_frames); only those with a
/// timestamp inside the window are written. A window with no data in any
/// modality is returned with `empty` set and nothing but meta.json stored.
MediaSegment cut_segment(const ClipStore& store, const std::string& session_id,
                         std::uint64_t segment_id, const TimeWindow& window,
                         std::span<const TimedFrame> grid_frames,
                         std::span<const AudioBlock> audio,
                         std::span<const TranscriptSpan> transcript, double target_fps);

/// Per-session streaming segmenter. Media is pushed in time order; `poll`
/// emits every window that is complete by `horizon` (all media before the
/// horizon must already be pushed) and `finish` flushes the remainder.
class Segmenter {
 public:
  Segmenter(SegmenterConfig cfg, std::string session_id, const ClipStore& store,
            std::uint64_t next_segment_id = 0, double origin_s = 0.0);

  void push(TimedFrame frame);
  void push(AudioBlock block);
  void push(TranscriptSpan span);

  std::vector<MediaSegment> poll(double horizon);
  std::vector<MediaSegment> finish(double end_s);

  std::uint64_t next_segment_id() const noexcept { return next_id_; }
  double cursor() const noexcept { return cursor_; }

 private:
  std::vector<TimeWindow> pending_windows(double horizon, bool final, double end_s) const;
  MediaSegment cut(const TimeWindow& w);
  std::vector<TimedFrame> grid_for(const TimeWindow& w) const;
  void prune();

  SegmenterConfig cfg_;
  std::string session_id_;
  const ClipStore& store_;
  std::uint64_t next_id_;
  double origin_;
  double cursor_;
  bool finished_ = false;
  std::vector<TimedFrame> frames_;
  std::vector<AudioBlock> audio_;
  std::vector<TranscriptSpan> transcript_;
};

}  // namespace memore
