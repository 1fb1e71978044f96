#include "memore/config.hpp"

#include <cmath>
#include <cstdlib>

#include "memore/media.hpp"
#include "memore/toml.hpp"

namespace memore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, "config key '" + key + "': " + what);
}

/// A table whose keys are checked off as they are read; leftovers are
/// unknown keys.
class Table {
 public:
  Table(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected a table");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json* get(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& k, double& out) {
    if (auto* v = get(k)) {
      if (!v->is_number()) bad(key(k), "expected a number");
      out = v->get<double>();
    }
  }
  template <typename Int>
  void integer(const std::string& k, Int& out) {
    if (auto* v = get(k)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        bad(key(k), "expected a nonnegative integer");
      }
      out = static_cast<Int>(v->get<std::int64_t>());
    }
  }
  void boolean(const std::string& k, bool& out) {
    if (auto* v = get(k)) {
      if (!v->is_boolean()) bad(key(k), "expected true or false");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> text(const std::string& k) {
    if (auto* v = get(k)) {
      if (!v->is_string()) bad(key(k), "expected a string");
      return v->get<std::string>();
    }
    return std::nullopt;
  }
  std::optional<Table> sub(const std::string& k) {
    if (auto* v = get(k)) return Table(*v, key(k));
    return std::nullopt;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) bad(key(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::set<Modality> modalities(const json& j, const std::string& key) {
  if (!j.is_array()) bad(key, "expected an array of modality names");
  std::set<Modality> out;
  for (const auto& m : j) {
    auto parsed = m.is_string() ? parse_modality(m.get<std::string>()) : std::nullopt;
    if (!parsed) bad(key, "unknown modality " + m.dump());
    out.insert(*parsed);
  }
  return out;
}

ServerConfig server(const json& j, const std::string& path, const fs::path& base) {
  Table t(j, path);
  ServerConfig s;
  auto id = t.text("model_id");
  if (!id) bad(t.key("model_id"), "required");
  s.descriptor.model_id = *id;
  if (auto kind = t.text("kind")) {
    auto k = parse_recognizer_kind(*kind);
    if (!k) bad(t.key("kind"), "expected reference, playback or remote");
    s.descriptor.kind = *k;
  }
  if (auto* m = t.get("modalities")) {
    s.descriptor.modalities = modalities(*m, t.key("modalities"));
  } else {
    bad(t.key("modalities"), "required");
  }
  s.descriptor.endpoint = t.text("endpoint");
  if (auto p = t.text("manifest")) s.manifest = resolve(base, *p);
  if (auto p = t.text("lexicon")) s.lexicon = resolve(base, *p);
  t.finish();
  return s;
}

}  // namespace

ServiceConfig ServiceConfig::defaults() {
  ServiceConfig c;
  ServerConfig s;
  s.descriptor.model_id = "reference";
  s.descriptor.kind = RecognizerKind::Reference;
  s.descriptor.modalities = {Modality::Video, Modality::Audio, Modality::Text};
  c.router.servers.push_back(s);
  return c;
}

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base) {
  ServiceConfig c = defaults();
  Table root(j, "");

  if (auto t = root.sub("storage")) {
    if (auto d = t->text("dir")) c.storage_dir = resolve(base, *d);
    t->finish();
  }
  if (auto t = root.sub("segmenter")) {
    if (auto m = t->text("mode")) {
      auto mode = parse_segmentation_mode(*m);
      if (!mode) bad(t->key("mode"), "expected fixed or conversational");
      c.segmenter.mode = *mode;
    }
    t->number("length_s", c.segmenter.length_s);
    t->number("min_tail_s", c.segmenter.min_tail_s);
    t->number("target_fps", c.segmenter.target_fps);
    t->number("pause_threshold_s", c.segmenter.pause_threshold_s);
    t->number("max_segment_s", c.segmenter.max_segment_s);
    t->finish();
  }
  if (auto t = root.sub("fusion")) {
    if (auto r = t->text("rule")) {
      auto rule = parse_fusion_rule(*r);
      if (!rule) bad(t->key("rule"), "expected loglinear or linear");
      c.fusion.rule = *rule;
    }
    t->number("epsilon", c.fusion.epsilon);
    if (auto w = t->sub("weights")) {
      for (auto m : {Modality::Video, Modality::Audio, Modality::Text}) {
        w->number(std::string(to_string(m)), c.fusion.weights[m]);
      }
      w->finish();
    }
    t->finish();
  }
  if (auto t = root.sub("router")) {
    t->integer("in_flight_limit", c.router.pipeline.in_flight_limit);
    t->number("reorder_timeout_s", c.router.pipeline.reorder_timeout_s);
    t->integer("failure_threshold", c.router.failure_threshold);
    t->number("probe_interval_s", c.router.probe_interval_s);
    t->boolean("prefer_multimodal", c.router.policy.prefer_multimodal);
    if (auto* s = t->get("servers")) {
      if (!s->is_array()) bad(t->key("servers"), "expected an array of tables");
      c.router.servers.clear();
      for (std::size_t i = 0; i < s->size(); ++i) {
        c.router.servers.push_back(
            server((*s)[i], t->key("servers[" + std::to_string(i) + "]"), base));
      }
    }
    t->finish();
  }
  if (auto t = root.sub("analytics")) {
    t->integer("alert_window", c.analytics.alerts.window_n);
    t->number("alert_threshold", c.analytics.alerts.threshold);
    t->boolean("evidence_discount", c.analytics.priority.evidence_discount);
    if (auto v = t->sub("valence")) {
      for (auto label : kAllEmotions) {
        double w = c.analytics.valence[label];
        const std::string name(to_string(label));
        v->number(name, w);
        if (!(w >= -1.0 && w <= 1.0)) bad("analytics.valence." + name, "must be in [-1, 1]");
        c.analytics.valence = c.analytics.valence.with(label, w);
      }
      v->finish();
    }
    t->finish();
  }
  if (auto t = root.sub("api")) {
    if (auto b = t->text("bind")) c.bind = *b;
    t->finish();
  }
  root.finish();
  c.validate();
  return c;
}

ServiceConfig ServiceConfig::parse_toml(std::string_view text, const fs::path& base) {
  return from_json(toml::parse(text), base);
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return parse_toml(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                    path.parent_path());
}

void ServiceConfig::validate() const {
  segmenter.validate();
  fusion.validate();
  if (storage_dir.empty()) bad("storage.dir", "must not be empty");
  if (router.pipeline.in_flight_limit == 0) bad("router.in_flight_limit", "must be >= 1");
  if (!(router.pipeline.reorder_timeout_s > 0.0)) bad("router.reorder_timeout_s", "must be > 0");
  if (router.failure_threshold < 1) bad("router.failure_threshold", "must be >= 1");
  if (!(router.probe_interval_s > 0.0)) bad("router.probe_interval_s", "must be > 0");
  if (analytics.alerts.window_n == 0) bad("analytics.alert_window", "must be >= 1");
  if (!std::isfinite(analytics.alerts.threshold)) bad("analytics.alert_threshold", "must be finite");
  for (double w : analytics.valence.weights()) {
    if (!std::isfinite(w)) bad("analytics.valence", "weights must be finite");
  }
  std::set<std::string> ids;
  for (const auto& s : router.servers) {
    s.descriptor.validate();
    if (!ids.insert(s.descriptor.model_id).second) {
      bad("router.servers", "duplicate model_id '" + s.descriptor.model_id + "'");
    }
    if (s.descriptor.kind == RecognizerKind::Playback && !s.manifest) {
      bad("router.servers", "playback server '" + s.descriptor.model_id + "' needs a manifest");
    }
  }
  parse_bind(bind);
}

std::optional<fs::path> config_path(const std::optional<fs::path>& cli_path) {
  if (const char* env = std::getenv("MEMORE_CONFIG"); env && *env) return fs::path(env);
  return cli_path;
}

std::pair<std::string, unsigned short> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == bind.size()) {
    bad("api.bind", "expected host:port, got '" + bind + "'");
  }
  const std::string port = bind.substr(colon + 1);
  if (port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
    bad("api.bind", "bad port '" + port + "'");
  }
  const unsigned long p = std::stoul(port);
  if (p > 65535) bad("api.bind", "bad port '" + port + "'");
  return {bind.substr(0, colon), static_cast<unsigned short>(p)};
}

std::shared_ptr<ServerRegistry> build_registry(const ServiceConfig& cfg, const ClipStore& store) {
  auto registry = std::make_shared<ServerRegistry>(cfg.router.failure_threshold);
  for (const auto& s : cfg.router.servers) {
    switch (s.descriptor.kind) {
      case RecognizerKind::Reference: {
        std::shared_ptr<const Lexicon> lexicon;
        if (s.lexicon) lexicon = std::make_shared<Lexicon>(Lexicon::load(*s.lexicon));
        registry->add(std::make_shared<ReferenceRecognizer>(s.descriptor, store, lexicon));
        break;
      }
      case RecognizerKind::Playback: {
        auto manifest = std::make_shared<PlaybackManifest>(PlaybackManifest::load(*s.manifest));
        registry->add(std::make_shared<PlaybackRecognizer>(s.descriptor, manifest));
        break;
      }
      case RecognizerKind::Remote:
        registry->add(std::make_shared<RemoteRecognizer>(s.descriptor, store));
        break;
    }
  }
  return registry;
}

}  // namespace memore
