#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memore/analytics.hpp"
#include "memore/fusion.hpp"
#include "memore/remote.hpp"
#include "memore/router.hpp"
#include "memore/segmenter.hpp"

namespace memore {

struct ServerConfig {
  RecognizerDescriptor descriptor;
  /// Playback only: the score manifest.
  std::optional<std::filesystem::path> manifest;
  /// Reference only: a lexicon replacing the bundled one.
  std::optional<std::filesystem::path> lexicon;
};

struct RouterConfig {
  std::vector<ServerConfig> servers;
  RoutingPolicy policy;
  PipelineOptions pipeline;
  int failure_threshold = 3;
  double probe_interval_s = 5.0;
};

struct AnalyticsConfig {
  AlertOptions alerts;
  PriorityOptions priority;
  ValenceMap valence;
};

struct ServiceConfig {
  std::filesystem::path storage_dir = "memore-data";
  SegmenterConfig segmenter;
  FusionConfig fusion;
  RouterConfig router;
  AnalyticsConfig analytics;
  std::string bind = "127.0.0.1:8080";

  /// A single reference recognizer covering every modality.
  static ServiceConfig defaults();

  /// Relative paths resolve against `base_dir`. Throws InvalidConfig naming
  /// the offending key on unknown keys, wrong types or invalid values.
  static ServiceConfig from_json(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {});
  static ServiceConfig parse_toml(std::string_view text,
                                  const std::filesystem::path& base_dir = {});
  static ServiceConfig load(const std::filesystem::path& path);

  void validate() const;
};

/// The path in MEMORE_CONFIG when set, else `cli_path`.
std::optional<std::filesystem::path> config_path(const std::optional<std::filesystem::path>& cli_path);

/// host:port split; throws InvalidConfig.
std::pair<std::string, unsigned short> parse_bind(const std::string& bind);

/// Instantiates every configured recognizer into a fresh registry.
std::shared_ptr<ServerRegistry> build_registry(const ServiceConfig& cfg, const ClipStore& store);

}  // namespace memore
