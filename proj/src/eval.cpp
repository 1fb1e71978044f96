#include "memore/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "memore/media.hpp"
#include "memore/segmenter.hpp"

namespace memore::eval {

namespace fs = std::filesystem;
using nlohmann::json;

LabelMap LabelMap::meld() {
  LabelMap m;
  m.set("anger", EmotionLabel::Anger);
  m.set("disgust", EmotionLabel::Disgust);
  m.set("fear", EmotionLabel::Fear);
  m.set("joy", EmotionLabel::Joy);
  m.set("sadness", EmotionLabel::Sadness);
  m.set("surprise", EmotionLabel::Surprise);
  m.set("neutral", std::nullopt);
  return m;
}

LabelMap LabelMap::identity() {
  LabelMap m;
  for (auto l : kAllEmotions) m.set(std::string(to_string(l)), l);
  return m;
}

void LabelMap::set(const std::string& external, std::optional<EmotionLabel> mapped) {
  entries_[external] = mapped;
}

std::optional<EmotionLabel> LabelMap::map(const std::string& external) const {
  auto it = entries_.find(external);
  if (it == entries_.end()) {
    throw Error(ErrorCode::NoGroundTruth, "label '" + external + "' is not in the label map");
  }
  return it->second;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool same_fraction_greater(const LengthResult& a, const LengthResult& b) {
  // a.correct / a.total > b.correct / b.total without division.
  const auto lhs = static_cast<unsigned __int128>(a.segments_correct) * b.segments_total;
  const auto rhs = static_cast<unsigned __int128>(b.segments_correct) * a.segments_total;
  return lhs > rhs;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

EvalManifest EvalManifest::parse_csv(std::string_view csv, LabelMap map) {
  EvalManifest m;
  m.label_map = std::move(map);
  std::istringstream in{std::string(csv)};
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  std::set<std::string> keys;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split_csv_line(line);
    for (auto& c : cols) c = trim(c);
    if (!header) {
      if (cols != std::vector<std::string>{"clip_key", "label", "duration_s", "split"}) {
        throw Error(ErrorCode::InvalidArgument,
                    "manifest header must be clip_key,label,duration_s,split");
      }
      header = true;
      continue;
    }
    if (cols.size() != 4) {
      throw Error(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": expected 4 columns");
    }
    ManifestRow row;
    row.clip_key = cols[0];
    row.label = cols[1];
    std::transform(row.label.begin(), row.label.end(), row.label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    try {
      std::size_t used = 0;
      row.duration_s = std::stod(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument(cols[2]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": bad duration_s");
    }
    if (!(row.duration_s > 0.0)) {
      throw Error(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": duration_s must be > 0");
    }
    row.split = cols[3];
    if (row.clip_key.empty() || !keys.insert(row.clip_key).second) {
      throw Error(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": empty or duplicate clip_key");
    }
    m.rows.push_back(std::move(row));
  }
  if (!header) throw Error(ErrorCode::InvalidArgument, "manifest is empty");
  return m;
}

EvalManifest EvalManifest::load_csv(const fs::path& path, LabelMap map) {
  auto bytes = read_file(path);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                   std::move(map));
}

double Recording::duration_s() const noexcept {
  return intervals.empty() ? 0.0 : intervals.back().window.t_end;
}

std::vector<Recording> recordings_from(const EvalManifest& manifest) {
  std::vector<Recording> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : manifest.rows) {
    const auto slash = row.clip_key.rfind('/');
    const std::string id = slash == std::string::npos ? row.clip_key : row.clip_key.substr(0, slash);
    auto [it, inserted] = index.try_emplace(id, out.size());
    if (inserted) out.push_back(Recording{id, {}});
    auto& rec = out[it->second];
    const double start = rec.duration_s();
    rec.intervals.push_back({{start, start + row.duration_s}, row.label});
  }
  return out;
}

std::optional<EmotionLabel> majority_label(const Recording& rec, const TimeWindow& window,
                                           const LabelMap& map) {
  // label -> (covered seconds, earliest start)
  std::map<std::string, std::pair<double, double>> share;
  for (const auto& iv : rec.intervals) {
    const double o = overlap(iv.window, window);
    if (o <= 0.0) continue;
    auto [it, inserted] = share.try_emplace(iv.label, 0.0, iv.window.t_start);
    it->second.first += o;
  }
  const std::string* best = nullptr;
  std::pair<double, double> best_share{};
  for (const auto& [label, s] : share) {
    if (!best || s.first > best_share.first ||
        (s.first == best_share.first && s.second < best_share.second)) {
      best = &label;
      best_share = s;
    }
  }
  if (!best) return std::nullopt;
  return map.map(*best);
}

double LengthResult::accuracy() const noexcept {
  return segments_total == 0 ? 0.0
                             : static_cast<double>(segments_correct) / static_cast<double>(segments_total);
}

std::string sweep_session_id(const std::string& recording_id, double length_s) {
  return recording_id + "@" + num(length_s) + "s";
}

SweepResult run_sweep(const EvalManifest& manifest, const SweepOptions& options,
                      const SegmentPredictor& predict) {
  if (options.lengths.empty()) throw Error(ErrorCode::InvalidArgument, "no segment lengths given");
  const auto recordings = recordings_from(manifest);
  if (recordings.empty()) throw Error(ErrorCode::NoGroundTruth, "manifest has no intervals");
  for (const auto& row : manifest.rows) manifest.label_map.map(row.label);

  auto evaluate = [&](double length) {
    LengthResult r;
    r.length_s = length;
    for (const auto& rec : recordings) {
      const auto windows = segment_fixed(rec.duration_s(), length, options.min_tail_s);
      for (std::size_t i = 0; i < windows.size(); ++i) {
        auto truth = majority_label(rec, windows[i], manifest.label_map);
        if (!truth) continue;
        MediaSegment seg;
        seg.segment_id = i;
        seg.session_id = sweep_session_id(rec.recording_id, length);
        seg.t_start = windows[i].t_start;
        seg.t_end = windows[i].t_end;
        ++r.segments_total;
        if (predict(rec, length, seg) == *truth) ++r.segments_correct;
      }
    }
    return r;
  };

  std::vector<std::future<LengthResult>> futures;
  for (double L : options.lengths) futures.push_back(std::async(std::launch::async, evaluate, L));
  SweepResult result;
  for (auto& f : futures) result.per_length.push_back(f.get());

  std::uint64_t usable = 0;
  for (const auto& r : result.per_length) usable += r.segments_total;
  if (usable == 0) throw Error(ErrorCode::NoGroundTruth, "no segment has a usable ground-truth label");

  const LengthResult* best = &result.per_length.front();
  for (const auto& r : result.per_length) {
    if (same_fraction_greater(r, *best) ||
        (!same_fraction_greater(*best, r) && r.length_s < best->length_s)) {
      best = &r;
    }
  }
  result.best_length = best->length_s;
  return result;
}

SegmentPredictor recognizer_predictor(const Recognizer& recognizer, FusionConfig fusion) {
  return [&recognizer, fusion](const Recording&, double, const MediaSegment& segment) {
    MediaSegment seg = segment;
    if (seg.modalities_present.empty()) {
      seg.modalities_present = recognizer.descriptor().modalities;
      for (auto m : seg.modalities_present) {
        seg.payload_refs[m] = seg.session_id + "/" + std::to_string(seg.segment_id);
      }
    }
    auto outcome = recognizer.score(seg, seg.modalities_present);
    if (outcome.scores.empty()) {
      if (!outcome.failures.empty()) throw outcome.failures.begin()->second;
      throw Error(ErrorCode::ScoringFailed, "no channel scored");
    }
    std::map<Channel, EmotionDistribution> inputs;
    for (const auto& [c, s] : outcome.scores) inputs.emplace(c, s.distribution);
    return dominant(fuse(inputs, fusion));
  };
}

double ClassRecall::recall() const noexcept {
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double ClassResult::accuracy() const noexcept {
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

ClassResult run_per_class(const EvalManifest& manifest,
                          const std::function<EmotionLabel(const ManifestRow&)>& predict) {
  std::map<EmotionLabel, ClassRecall> by_label;
  ClassResult result;
  for (const auto& row : manifest.rows) {
    auto truth = manifest.label_map.map(row.label);
    if (!truth) continue;
    const EmotionLabel guess = predict(row);
    auto& c = by_label[*truth];
    c.label = *truth;
    ++c.total;
    ++result.total;
    if (guess == *truth) {
      ++c.correct;
      ++result.correct;
    }
    ++result.confusion[*truth][guess];
  }
  if (result.total == 0) {
    throw Error(ErrorCode::EmptyAfterMapping, "no manifest row survives the label map");
  }
  for (const auto& [_, c] : by_label) result.per_class.push_back(c);
  std::stable_sort(result.per_class.begin(), result.per_class.end(),
                   [](const ClassRecall& a, const ClassRecall& b) {
                     const auto lhs = static_cast<unsigned __int128>(a.correct) * b.total;
                     const auto rhs = static_cast<unsigned __int128>(b.correct) * a.total;
                     if (lhs != rhs) return lhs > rhs;
                     return index_of(a.label) < index_of(b.label);
                   });
  return result;
}

std::function<EmotionLabel(const ManifestRow&)> playback_clip_predictor(
    std::shared_ptr<const PlaybackManifest> manifest, FusionConfig fusion) {
  return [manifest = std::move(manifest), fusion](const ManifestRow& row) {
    const auto* entry = manifest->find(row.clip_key);
    if (!entry) {
      throw Error(ErrorCode::PayloadUnreadable, "no playback entry for clip '" + row.clip_key + "'");
    }
    std::map<Channel, EmotionDistribution> inputs(entry->begin(), entry->end());
    return dominant(fuse(inputs, fusion));
  };
}

json to_json(const SweepResult& r) {
  json rows = json::array();
  for (const auto& l : r.per_length) {
    rows.push_back(json{{"length_s", round_sig9(l.length_s)},
                        {"segments_total", l.segments_total},
                        {"segments_correct", l.segments_correct},
                        {"accuracy", round_sig9(l.accuracy())}});
  }
  return json{{"experiment", "segment_length_sweep"},
              {"accuracy_denominator", "segments"},
              {"per_length", std::move(rows)},
              {"best_length_s", round_sig9(r.best_length)}};
}

json to_json(const ClassResult& r) {
  json rows = json::array();
  for (const auto& c : r.per_class) {
    rows.push_back(json{{"label", std::string(to_string(c.label))},
                        {"total", c.total},
                        {"correct", c.correct},
                        {"recall", round_sig9(c.recall())}});
  }
  json confusion = json::object();
  for (const auto& [truth, row] : r.confusion) {
    json counts = json::object();
    for (const auto& [guess, n] : row) counts[std::string(to_string(guess))] = n;
    confusion[std::string(to_string(truth))] = std::move(counts);
  }
  return json{{"experiment", "per_class_recall"},
              {"per_class", std::move(rows)},
              {"total", r.total},
              {"correct", r.correct},
              {"accuracy", round_sig9(r.accuracy())},
              {"confusion", std::move(confusion)}};
}

std::string to_csv(const SweepResult& r) {
  std::string out = "length_s,segments_total,segments_correct,accuracy\n";
  for (const auto& l : r.per_length) {
    out += num(l.length_s) + "," + std::to_string(l.segments_total) + "," +
           std::to_string(l.segments_correct) + "," + num(l.accuracy()) + "\n";
  }
  return out;
}

std::string to_csv(const ClassResult& r) {
  std::string out = "label,total,correct,recall\n";
  for (const auto& c : r.per_class) {
    out += std::string(to_string(c.label)) + "," + std::to_string(c.total) + "," +
           std::to_string(c.correct) + "," + num(c.recall()) + "\n";
  }
  return out;
}

namespace {

template <typename Result>
void export_any(const Result& r, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "results.json", to_json(r).dump(2) + "\n");
  write_file(dir / "results.csv", to_csv(r));
}

}  // namespace

void export_results(const SweepResult& r, const fs::path& dir) { export_any(r, dir); }
void export_results(const ClassResult& r, const fs::path& dir) { export_any(r, dir); }

}  // namespace memore::eval
