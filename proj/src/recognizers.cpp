#include "memore/recognizers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "memore/media.hpp"

namespace memore {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(RecognizerKind k) noexcept {
  switch (k) {
    case RecognizerKind::Reference: return "reference";
    case RecognizerKind::Playback: return "playback";
    case RecognizerKind::Remote: return "remote";
  }
  return "";
}

std::optional<RecognizerKind> parse_recognizer_kind(std::string_view s) noexcept {
  if (s == "reference") return RecognizerKind::Reference;
  if (s == "playback") return RecognizerKind::Playback;
  if (s == "remote") return RecognizerKind::Remote;
  return std::nullopt;
}

void RecognizerDescriptor::validate() const {
  if (model_id.empty()) throw Error(ErrorCode::InvalidConfig, "recognizer model_id must be nonempty");
  if (modalities.empty()) {
    throw Error(ErrorCode::InvalidConfig, "recognizer '" + model_id + "' needs at least one modality");
  }
  if ((kind == RecognizerKind::Remote) != endpoint.has_value()) {
    throw Error(ErrorCode::InvalidConfig,
                "recognizer '" + model_id + "': an endpoint is required for, and only for, remote kind");
  }
}

std::string describe(const Error& e) {
  return std::string(to_string(e.code())) + ": " + e.what();
}

Recognizer::Recognizer(RecognizerDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
}

void Recognizer::check_supported(const MediaSegment& segment, Modality modality) const {
  if (!descriptor_.modalities.contains(modality)) {
    throw Error(ErrorCode::UnsupportedModality, descriptor_.model_id + " does not score " +
                                                    std::string(to_string(modality)));
  }
  if (!segment.modalities_present.contains(modality)) {
    throw Error(ErrorCode::UnsupportedModality,
                "segment " + std::to_string(segment.segment_id) + " has no " +
                    std::string(to_string(modality)) + " payload");
  }
}

ScoreOutcome Recognizer::score(const MediaSegment& segment,
                               const std::set<Modality>& modalities) const {
  ScoreOutcome out;
  for (auto m : modalities) {
    try {
      check_supported(segment, m);
      out.scores.emplace(channel_of(m), ChannelScore{score_modality(segment, m), descriptor_.model_id});
    } catch (const Error& e) {
      out.failures.emplace(m, e);
    }
  }
  return out;
}

ChannelScore Recognizer::score(const MediaSegment& segment, Modality modality) const {
  check_supported(segment, modality);
  auto outcome = score(segment, std::set<Modality>{modality});
  if (auto it = outcome.failures.find(modality); it != outcome.failures.end()) throw it->second;
  auto it = outcome.scores.find(channel_of(modality));
  if (it == outcome.scores.end()) {
    throw Error(ErrorCode::PayloadUnreadable, descriptor_.model_id + " returned no score for " +
                                                  std::string(to_string(modality)));
  }
  return it->second;
}

// ---------------------------------------------------------------------------

PlaybackManifest::PlaybackManifest(std::map<std::string, Entry> entries)
    : entries_(std::move(entries)) {}

PlaybackManifest PlaybackManifest::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "playback manifest must be an object");
  std::map<std::string, Entry> entries;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object() || value.empty()) {
      throw Error(ErrorCode::InvalidArgument, "playback entry '" + key + "' must be a nonempty object");
    }
    Entry e;
    for (const auto& [ch, dist] : value.items()) {
      auto c = parse_channel(ch);
      if (!c) throw Error(ErrorCode::InvalidArgument, "playback entry '" + key + "': unknown channel '" + ch + "'");
      try {
        e.emplace(*c, distribution_from_json(dist));
      } catch (const Error& err) {
        throw Error(ErrorCode::InvalidArgument, "playback entry '" + key + "." + ch + "': " + err.what());
      }
    }
    entries.emplace(key, std::move(e));
  }
  return PlaybackManifest(std::move(entries));
}

PlaybackManifest PlaybackManifest::load(const fs::path& path) {
  auto bytes = read_file(path);
  auto j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidArgument, path.string() + " is not valid JSON");
  return from_json(j);
}

json PlaybackManifest::to_json() const {
  json j = json::object();
  for (const auto& [key, entry] : entries_) {
    json e = json::object();
    for (const auto& [c, d] : entry) e[std::string(memore::to_string(c))] = memore::to_json(d);
    j[key] = std::move(e);
  }
  return j;
}

const PlaybackManifest::Entry* PlaybackManifest::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

PlaybackRecognizer::PlaybackRecognizer(RecognizerDescriptor descriptor,
                                       std::shared_ptr<const PlaybackManifest> manifest)
    : Recognizer(std::move(descriptor)), manifest_(std::move(manifest)) {}

const PlaybackManifest::Entry& PlaybackRecognizer::entry_for(const MediaSegment& segment) const {
  const std::string key = segment.session_id + "/" + std::to_string(segment.segment_id);
  if (auto* e = manifest_->find(key)) return *e;
  for (const auto& [_, ref] : segment.payload_refs) {
    if (auto* e = manifest_->find(ref)) return *e;
  }
  throw Error(ErrorCode::PayloadUnreadable, "no playback entry for '" + key + "'");
}

ScoreOutcome PlaybackRecognizer::score(const MediaSegment& segment,
                                       const std::set<Modality>& modalities) const {
  const bool wants_av = modalities.contains(Modality::Video) && modalities.contains(Modality::Audio);
  const PlaybackManifest::Entry* entry = nullptr;
  try {
    entry = &entry_for(segment);
  } catch (const Error&) {
  }
  if (wants_av && entry && entry->contains(Channel::AudioVisual) &&
      !entry->contains(Channel::Video) && !entry->contains(Channel::Audio)) {
    ScoreOutcome out;
    try {
      check_supported(segment, Modality::Video);
      check_supported(segment, Modality::Audio);
      out.scores.emplace(Channel::AudioVisual,
                         ChannelScore{entry->at(Channel::AudioVisual), descriptor().model_id});
    } catch (const Error& e) {
      out.failures.emplace(Modality::Video, e);
      out.failures.emplace(Modality::Audio, e);
    }
    std::set<Modality> rest = modalities;
    rest.erase(Modality::Video);
    rest.erase(Modality::Audio);
    auto more = Recognizer::score(segment, rest);
    out.scores.merge(more.scores);
    out.failures.merge(more.failures);
    return out;
  }
  return Recognizer::score(segment, modalities);
}

EmotionDistribution PlaybackRecognizer::score_modality(const MediaSegment& segment,
                                                       Modality modality) const {
  const auto& entry = entry_for(segment);
  auto it = entry.find(channel_of(modality));
  if (it == entry.end()) {
    throw Error(ErrorCode::PayloadUnreadable,
                "playback entry for segment " + std::to_string(segment.segment_id) + " has no " +
                    std::string(to_string(modality)) + " distribution");
  }
  return it->second;
}

// ---------------------------------------------------------------------------

Lexicon Lexicon::parse(std::string_view tsv) {
  Lexicon lex;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string token;
    std::getline(fields, token, '\t');
    if (!header_seen) {
      header_seen = true;
      std::string name;
      std::size_t col = 0;
      bool ok = token == "token";
      while (ok && std::getline(fields, name, '\t')) {
        ok = col < kEmotionCount && name == to_string(kAllEmotions[col]);
        ++col;
      }
      if (!ok || col != kEmotionCount) {
        throw Error(ErrorCode::InvalidArgument, "lexicon header must be: token + the 8 labels in order");
      }
      continue;
    }
    Counts counts{};
    std::string cell;
    std::size_t col = 0;
    while (std::getline(fields, cell, '\t')) {
      if (col >= kEmotionCount) break;
      try {
        std::size_t used = 0;
        const long v = std::stol(cell, &used);
        if (used != cell.size() || v < 0) throw std::invalid_argument(cell);
        counts[col++] = static_cast<unsigned>(v);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "lexicon line " + std::to_string(line_no) + ": bad count");
      }
    }
    if (col != kEmotionCount) {
      throw Error(ErrorCode::InvalidArgument,
                  "lexicon line " + std::to_string(line_no) + ": expected 8 counts");
    }
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    lex.entries_[token] = counts;
  }
  if (!header_seen) throw Error(ErrorCode::InvalidArgument, "lexicon is empty");
  return lex;
}

Lexicon Lexicon::load(const fs::path& path) {
  auto bytes = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

const Lexicon& Lexicon::bundled() {
  static const Lexicon lex = load(fs::path(MEMORE_DATA_DIR) / "lexicon.tsv");
  return lex;
}

const Lexicon::Counts* Lexicon::find(std::string_view token) const {
  auto it = entries_.find(std::string(token));
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    std::size_t lead = 0;
    while (lead < cur.size() && cur[lead] == '\'') ++lead;
    if (lead < cur.size()) tokens.push_back(cur.substr(lead));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

EmotionDistribution reference_text_score(std::string_view text, const Lexicon& lexicon) {
  std::array<double, kEmotionCount> hits{};
  double total = 0.0;
  for (const auto& tok : tokenize(text)) {
    if (const auto* counts = lexicon.find(tok)) {
      for (std::size_t i = 0; i < kEmotionCount; ++i) {
        hits[i] += (*counts)[i];
        total += (*counts)[i];
      }
    }
  }
  EmotionDistribution::Mass m{};
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    m[i] = (hits[i] + kLexiconSmoothing) / (total + kLexiconSmoothing * kEmotionCount);
  }
  return normalize(m);
}

// ---------------------------------------------------------------------------

std::string_view to_string(ArousalBucket b) noexcept {
  switch (b) {
    case ArousalBucket::Low: return "low";
    case ArousalBucket::Mid: return "mid";
    case ArousalBucket::High: return "high";
  }
  return "";
}

const EmotionDistribution& arousal_prior(ArousalBucket b) {
  // joy, sadness, anger, anticipation, disgust, fear, trust, surprise
  static const EmotionDistribution low =
      EmotionDistribution::from_mass({0.05, 0.35, 0.05, 0.10, 0.05, 0.10, 0.25, 0.05});
  static const EmotionDistribution mid =
      EmotionDistribution::from_mass({0.20, 0.10, 0.08, 0.20, 0.07, 0.07, 0.20, 0.08});
  static const EmotionDistribution high =
      EmotionDistribution::from_mass({0.22, 0.03, 0.22, 0.10, 0.05, 0.13, 0.03, 0.22});
  switch (b) {
    case ArousalBucket::Low: return low;
    case ArousalBucket::Mid: return mid;
    case ArousalBucket::High: return high;
  }
  return mid;
}

AudioFeatures audio_features(std::span<const std::int16_t> samples) {
  AudioFeatures f;
  if (samples.empty()) return f;
  double energy = 0.0;
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = samples[i] / 32768.0;
    energy += x * x;
    if (i > 0 && ((samples[i - 1] >= 0) != (samples[i] >= 0))) ++crossings;
  }
  f.rms = std::sqrt(energy / static_cast<double>(samples.size()));
  f.zcr = samples.size() > 1 ? static_cast<double>(crossings) / static_cast<double>(samples.size() - 1)
                             : 0.0;
  return f;
}

ArousalBucket audio_arousal(const AudioFeatures& f) {
  using namespace audio_thresholds;
  if (f.rms < kLowRms) return ArousalBucket::Low;
  if (f.rms >= kHighRms || (f.rms >= kBrightRms && f.zcr >= kBrightZcr)) return ArousalBucket::High;
  return ArousalBucket::Mid;
}

EmotionDistribution reference_audio_score(std::span<const std::int16_t> samples, int sample_rate) {
  if (sample_rate <= 0 ||
      static_cast<double>(samples.size()) < audio_thresholds::kMinDurationS * sample_rate) {
    throw Error(ErrorCode::TooShort, "reference audio scoring needs at least 0.5 s of audio");
  }
  return arousal_prior(audio_arousal(audio_features(samples)));
}

double motion_energy(std::span<const Image> frames) {
  if (frames.size() < 2) return 0.0;
  double total = 0.0;
  std::vector<float> prev = to_gray(frames[0]);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].width != frames[0].width || frames[i].height != frames[0].height) {
      throw Error(ErrorCode::PayloadUnreadable, "frames differ in size");
    }
    std::vector<float> cur = to_gray(frames[i]);
    double diff = 0.0;
    for (std::size_t p = 0; p < cur.size(); ++p) diff += std::abs(cur[p] - prev[p]);
    total += cur.empty() ? 0.0 : diff / static_cast<double>(cur.size());
    prev = std::move(cur);
  }
  return total / static_cast<double>(frames.size() - 1);
}

ArousalBucket video_arousal(double motion) {
  using namespace video_thresholds;
  if (motion < kLowMotion) return ArousalBucket::Low;
  if (motion >= kHighMotion) return ArousalBucket::High;
  return ArousalBucket::Mid;
}

ReferenceRecognizer::ReferenceRecognizer(RecognizerDescriptor descriptor, const ClipStore& store,
                                         std::shared_ptr<const Lexicon> lexicon)
    : Recognizer(std::move(descriptor)), store_(store), lexicon_(std::move(lexicon)) {}

EmotionDistribution ReferenceRecognizer::score_modality(const MediaSegment& segment,
                                                        Modality modality) const {
  auto ref = segment.payload_refs.find(modality);
  if (ref == segment.payload_refs.end()) {
    throw Error(ErrorCode::UnsupportedModality, "segment has no payload for " +
                                                    std::string(to_string(modality)));
  }
  const fs::path path = store_.resolve(ref->second);
  auto unreadable = [&](const std::string& why) {
    return Error(ErrorCode::PayloadUnreadable, path.string() + ": " + why);
  };
  switch (modality) {
    case Modality::Text: {
      std::vector<std::uint8_t> bytes;
      try {
        bytes = read_file(path);
      } catch (const Error& e) {
        throw unreadable(e.what());
      }
      const Lexicon& lex = lexicon_ ? *lexicon_ : Lexicon::bundled();
      return reference_text_score(
          std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), lex);
    }
    case Modality::Audio: {
      PcmAudio audio;
      try {
        audio = decode_wav(read_file(path));
      } catch (const Error& e) {
        throw unreadable(e.what());
      }
      return reference_audio_score(audio.samples, audio.sample_rate);
    }
    case Modality::Video: {
      std::vector<fs::path> files;
      std::error_code ec;
      for (const auto& entry : fs::directory_iterator(path, ec)) {
        if (entry.path().extension() == ".png") files.push_back(entry.path());
      }
      if (ec || files.empty()) throw unreadable("no frames");
      std::sort(files.begin(), files.end());
      std::vector<Image> frames;
      frames.reserve(files.size());
      for (const auto& f : files) {
        try {
          frames.push_back(decode_png(read_file(f)));
        } catch (const Error& e) {
          throw unreadable(e.what());
        }
      }
      return arousal_prior(video_arousal(motion_energy(frames)));
    }
  }
  throw Error(ErrorCode::UnsupportedModality, "unknown modality");
}

}  // namespace memore
