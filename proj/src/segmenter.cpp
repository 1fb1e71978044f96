#include "memore/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "memore/media.hpp"

namespace memore {

namespace fs = std::filesystem;

namespace {

constexpr double kTimeSlack = 1e-9;

// Half-open range of grid indices k with k/fps in [lo, hi).
std::pair<std::int64_t, std::int64_t> grid_range(double lo, double hi, double fps) {
  auto k_lo = static_cast<std::int64_t>(std::ceil(lo * fps));
  while (k_lo > 0 && (k_lo - 1) / fps >= lo) --k_lo;
  while (k_lo / fps < lo) ++k_lo;
  auto k_hi = static_cast<std::int64_t>(std::ceil(hi * fps));
  while (k_hi > k_lo && (k_hi - 1) / fps >= hi) --k_hi;
  while (k_hi / fps < hi) ++k_hi;
  return {std::max<std::int64_t>(k_lo, 0), std::max(k_hi, std::max<std::int64_t>(k_lo, 0))};
}

// Largest k with k/fps <= t (within slack).
std::int64_t last_grid_index(double t, double fps) {
  auto k = static_cast<std::int64_t>(std::floor(t * fps + kTimeSlack));
  while (k > 0 && k / fps > t + kTimeSlack) --k;
  return k;
}

bool ends_sentence(const std::string& text) {
  auto end = text.find_last_not_of(" \t\r\n\"')]");
  if (end == std::string::npos) return false;
  char c = text[end];
  return c == '.' || c == '?' || c == '!';
}

bool has_text(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") != std::string::npos;
}

std::vector<TimeWindow> conversational_windows(std::span<const TranscriptSpan> spans,
                                               double origin, double end,
                                               double pause_threshold_s,
                                               double max_segment_s) {
  std::vector<double> cuts;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const double e = spans[i].t_end;
    if (ends_sentence(spans[i].text)) cuts.push_back(e);
    if (i + 1 < spans.size() && spans[i + 1].t_start - e >= pause_threshold_s) {
      cuts.push_back(e);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<TimeWindow> out;
  double start = origin;
  auto emit = [&](double stop) {
    while (stop - start > max_segment_s) {
      out.push_back({start, start + max_segment_s});
      start += max_segment_s;
    }
    if (stop > start) out.push_back({start, stop});
    start = stop;
  };
  for (double c : cuts) {
    if (c > start && c < end) emit(c);
  }
  if (end > start) emit(end);
  return out;
}

double media_end(std::span<const TranscriptSpan> spans, std::span<const AudioBlock> audio) {
  double end = 0.0;
  for (const auto& s : spans) end = std::max(end, s.t_end);
  for (const auto& b : audio) end = std::max(end, b.t_end());
  return end;
}

}  // namespace

bool is_supported_sample_rate(int hz) noexcept {
  return hz == 16000 || hz == 44100 || hz == 48000;
}

void SegmenterConfig::validate() const {
  auto bad = [](const std::string& what) {
    return Error(ErrorCode::InvalidConfig, "segmenter." + what);
  };
  if (!(length_s >= 1.0 && length_s <= 300.0)) throw bad("length_s must be in [1,300]");
  if (!(min_tail_s >= 0.0 && min_tail_s < length_s)) {
    throw bad("min_tail_s must be >= 0 and < length_s");
  }
  if (!(target_fps > 0.0)) throw bad("target_fps must be > 0");
  if (!(pause_threshold_s > 0.0)) throw bad("pause_threshold_s must be > 0");
  if (!(max_segment_s > 0.0)) throw bad("max_segment_s must be > 0");
}

std::size_t nearest_frame(std::span<const TimedFrame> frames, double t) {
  auto it = std::lower_bound(frames.begin(), frames.end(), t,
                             [](const TimedFrame& f, double v) { return f.t < v; });
  if (it == frames.begin()) return 0;
  if (it == frames.end()) return frames.size() - 1;
  const auto after = static_cast<std::size_t>(it - frames.begin());
  const std::size_t before = after - 1;
  // Walk back over equal timestamps so ties resolve to the earliest frame.
  std::size_t first_before = before;
  while (first_before > 0 && frames[first_before - 1].t == frames[before].t) --first_before;
  return (t - frames[before].t) <= (frames[after].t - t) ? first_before : after;
}

std::vector<TimedFrame> resample_frames(std::span<const TimedFrame> frames, double target_fps) {
  if (frames.empty()) throw Error(ErrorCode::EmptyStream, "no frames to resample");
  if (!(target_fps > 0.0)) throw Error(ErrorCode::InvalidArgument, "target_fps must be > 0");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].t < 0.0 || (i > 0 && frames[i].t < frames[i - 1].t)) {
      throw Error(ErrorCode::InvalidArgument, "frames must be time-ordered with t >= 0");
    }
  }
  const std::int64_t k_max = last_grid_index(frames.back().t, target_fps);
  std::vector<TimedFrame> out;
  out.reserve(static_cast<std::size_t>(k_max + 1));
  for (std::int64_t k = 0; k <= k_max; ++k) {
    const double t = k / target_fps;
    TimedFrame f = frames[nearest_frame(frames, t)];
    f.t = t;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<TimeWindow> segment_fixed(double duration_s, double length_s, double min_tail_s) {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be > 0");
  if (!(length_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "length must be > 0");
  auto n = static_cast<std::int64_t>(std::floor(duration_s / length_s));
  while ((n + 1) * length_s <= duration_s) ++n;
  while (n > 0 && n * length_s > duration_s) --n;

  std::vector<TimeWindow> out;
  out.reserve(static_cast<std::size_t>(n + 1));
  for (std::int64_t i = 0; i < n; ++i) out.push_back({i * length_s, (i + 1) * length_s});
  const double tail_start = n * length_s;
  const double tail = duration_s - tail_start;
  if (tail > 0.0 && tail >= min_tail_s) out.push_back({tail_start, duration_s});
  return out;
}

std::vector<TimeWindow> segment_conversational(std::span<const TranscriptSpan> transcript,
                                               std::span<const AudioBlock> audio,
                                               double pause_threshold_s, double max_segment_s) {
  if (transcript.empty()) throw Error(ErrorCode::NoTranscript, "transcript is empty");
  if (!(max_segment_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_segment_s must be > 0");
  for (std::size_t i = 1; i < transcript.size(); ++i) {
    if (transcript[i].t_start < transcript[i - 1].t_start) {
      throw Error(ErrorCode::InvalidArgument, "transcript spans must be time-ordered");
    }
  }
  return conversational_windows(transcript, 0.0, media_end(transcript, audio),
                                pause_threshold_s, max_segment_s);
}

MediaSegment cut_segment(const ClipStore& store, const std::string& session_id,
                         std::uint64_t segment_id, const TimeWindow& window,
                         std::span<const TimedFrame> grid_frames,
                         std::span<const AudioBlock> audio,
                         std::span<const TranscriptSpan> transcript, double target_fps) {
  if (!(window.t_end > window.t_start)) {
    throw Error(ErrorCode::InvalidArgument, "window must have t_end > t_start");
  }
  MediaSegment seg;
  seg.segment_id = segment_id;
  seg.session_id = session_id;
  seg.t_start = window.t_start;
  seg.t_end = window.t_end;
  seg.frame_rate = target_fps;

  const std::string locator = store.segment_locator(session_id, segment_id);
  const fs::path dir = store.resolve(locator);
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  std::size_t frame_count = 0;
  for (const auto& f : grid_frames) {
    if (f.t < window.t_start || f.t >= window.t_end || !f.png) continue;
    if (frame_count == 0) fs::create_directories(dir / "frames");
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", frame_count++);
    write_file(dir / "frames" / name, *f.png);
  }
  if (frame_count > 0) {
    seg.modalities_present.insert(Modality::Video);
    seg.payload_refs[Modality::Video] = locator + "/frames";
  }

  PcmAudio clip;
  clip.sample_rate = 0;
  for (const auto& b : audio) {
    if (b.samples.empty() || b.t_end() <= window.t_start || b.t_start >= window.t_end) continue;
    if (clip.sample_rate != 0 && clip.sample_rate != b.sample_rate) {
      throw Error(ErrorCode::IngestFormatError, "audio blocks mix sample rates");
    }
    clip.sample_rate = b.sample_rate;
    const double sr = b.sample_rate;
    auto lo = static_cast<std::int64_t>(std::ceil((window.t_start - b.t_start) * sr - kTimeSlack));
    auto hi = static_cast<std::int64_t>(std::ceil((window.t_end - b.t_start) * sr - kTimeSlack));
    lo = std::clamp<std::int64_t>(lo, 0, static_cast<std::int64_t>(b.samples.size()));
    hi = std::clamp<std::int64_t>(hi, lo, static_cast<std::int64_t>(b.samples.size()));
    clip.samples.insert(clip.samples.end(), b.samples.begin() + lo, b.samples.begin() + hi);
  }
  if (!clip.samples.empty()) {
    write_file(dir / "audio.wav", encode_wav(clip));
    seg.modalities_present.insert(Modality::Audio);
    seg.payload_refs[Modality::Audio] = locator + "/audio.wav";
  }

  std::string text;
  for (const auto& s : transcript) {
    const bool inside = s.t_end > s.t_start
                            ? (s.t_start < window.t_end && s.t_end > window.t_start)
                            : (s.t_start >= window.t_start && s.t_start < window.t_end);
    if (inside && has_text(s.text)) text += s.text + "\n";
  }
  if (!text.empty()) {
    write_file(dir / "transcript.txt", text);
    seg.modalities_present.insert(Modality::Text);
    seg.payload_refs[Modality::Text] = locator + "/transcript.txt";
  }

  seg.empty = seg.modalities_present.empty();
  write_file(dir / "meta.json", to_json(seg).dump(2) + "\n");
  return seg;
}

Segmenter::Segmenter(SegmenterConfig cfg, std::string session_id, const ClipStore& store,
                     std::uint64_t next_segment_id, double origin_s)
    : cfg_(cfg),
      session_id_(std::move(session_id)),
      store_(store),
      next_id_(next_segment_id),
      origin_(origin_s),
      cursor_(origin_s) {
  cfg_.validate();
}

void Segmenter::push(TimedFrame frame) {
  if (finished_) throw Error(ErrorCode::SessionClosed, "segmenter already finished");
  if (frame.t < 0.0 || (!frames_.empty() && frame.t < frames_.back().t)) {
    throw Error(ErrorCode::IngestFormatError, "frames must arrive with non-decreasing t >= 0");
  }
  frames_.push_back(std::move(frame));
}

void Segmenter::push(AudioBlock block) {
  if (finished_) throw Error(ErrorCode::SessionClosed, "segmenter already finished");
  if (!is_supported_sample_rate(block.sample_rate)) {
    throw Error(ErrorCode::IngestFormatError,
                "unsupported sample rate " + std::to_string(block.sample_rate));
  }
  if (!audio_.empty()) {
    if (block.sample_rate != audio_.back().sample_rate) {
      throw Error(ErrorCode::IngestFormatError, "audio blocks mix sample rates");
    }
    if (block.t_start < audio_.back().t_end() - kTimeSlack) {
      throw Error(ErrorCode::IngestFormatError, "audio blocks overlap or go backwards");
    }
  }
  audio_.push_back(std::move(block));
}

void Segmenter::push(TranscriptSpan span) {
  if (finished_) throw Error(ErrorCode::SessionClosed, "segmenter already finished");
  if (span.t_end < span.t_start) {
    throw Error(ErrorCode::IngestFormatError, "transcript span ends before it starts");
  }
  if (!transcript_.empty() && span.t_start < transcript_.back().t_start) {
    throw Error(ErrorCode::IngestFormatError, "transcript spans must be time-ordered");
  }
  transcript_.push_back(std::move(span));
}

std::vector<TimeWindow> Segmenter::pending_windows(double horizon, bool final,
                                                   double end_s) const {
  std::vector<TimeWindow> all;
  if (cfg_.mode == SegmentationMode::Conversational && !transcript_.empty()) {
    const double end =
        final ? std::max(end_s, media_end(transcript_, audio_)) : media_end(transcript_, {});
    all = conversational_windows(transcript_, origin_, end, cfg_.pause_threshold_s,
                                 cfg_.max_segment_s);
    if (!final && !all.empty()) all.pop_back();  // the last window may still grow
  } else if (cfg_.mode == SegmentationMode::Fixed || final) {
    const double span = (final ? end_s : horizon) - origin_;
    if (span > 0.0) {
      if (final) {
        for (auto w : segment_fixed(span, cfg_.length_s, cfg_.min_tail_s)) {
          all.push_back({origin_ + w.t_start, origin_ + w.t_end});
        }
      } else {
        for (std::int64_t i = 0; (i + 1) * cfg_.length_s <= span; ++i) {
          all.push_back({origin_ + i * cfg_.length_s, origin_ + (i + 1) * cfg_.length_s});
        }
      }
    }
  }
  std::vector<TimeWindow> out;
  for (const auto& w : all) {
    if (w.t_start < cursor_ - kTimeSlack) continue;
    if (!final && w.t_end > horizon) break;
    out.push_back(w);
  }
  return out;
}

std::vector<TimedFrame> Segmenter::grid_for(const TimeWindow& w) const {
  std::vector<TimedFrame> grid;
  if (frames_.empty()) return grid;
  const double fps = cfg_.target_fps;
  auto [k_lo, k_hi] = grid_range(w.t_start, w.t_end, fps);
  k_hi = std::min(k_hi, last_grid_index(frames_.back().t, fps) + 1);
  for (std::int64_t k = k_lo; k < k_hi; ++k) {
    TimedFrame f = frames_[nearest_frame(frames_, k / fps)];
    f.t = k / fps;
    grid.push_back(std::move(f));
  }
  return grid;
}

MediaSegment Segmenter::cut(const TimeWindow& w) {
  auto grid = grid_for(w);
  auto seg = cut_segment(store_, session_id_, next_id_, w, grid, audio_, transcript_,
                         cfg_.target_fps);
  ++next_id_;
  cursor_ = w.t_end;
  return seg;
}

void Segmenter::prune() {
  // Keep the last frame at or before the cursor: it can still be nearest
  // to the next grid point.
  std::size_t keep_from = 0;
  while (keep_from + 1 < frames_.size() && frames_[keep_from + 1].t <= cursor_) ++keep_from;
  while (keep_from > 0 && frames_[keep_from - 1].t == frames_[keep_from].t) --keep_from;
  frames_.erase(frames_.begin(), frames_.begin() + static_cast<std::ptrdiff_t>(keep_from));
  std::erase_if(audio_, [&](const AudioBlock& b) { return b.t_end() <= cursor_; });
}

std::vector<MediaSegment> Segmenter::poll(double horizon) {
  if (finished_) return {};
  std::vector<MediaSegment> out;
  for (const auto& w : pending_windows(horizon, false, horizon)) out.push_back(cut(w));
  if (!out.empty()) prune();
  return out;
}

std::vector<MediaSegment> Segmenter::finish(double end_s) {
  if (finished_) return {};
  std::vector<MediaSegment> out;
  for (const auto& w : pending_windows(end_s, true, end_s)) out.push_back(cut(w));
  finished_ = true;
  frames_.clear();
  audio_.clear();
  return out;
}

}  // namespace memore
