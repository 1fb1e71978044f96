#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "memore/fusion.hpp"
#include "memore/recognizers.hpp"

namespace memore {

enum class Health { Up, Down };

std::string_view to_string(Health h) noexcept;

struct ServerState {
  std::shared_ptr<const Recognizer> recognizer;
  Health health = Health::Up;
  std::chrono::system_clock::time_point last_seen{};
  int consecutive_failures = 0;
};

/// Registered recognizers with health. Readers take immutable snapshots;
/// every update publishes a new one.
class ServerRegistry {
 public:
  using Snapshot = std::vector<ServerState>;

  explicit ServerRegistry(int failure_threshold = 3);

  /// Throws InvalidConfig on a duplicate model_id.
  void add(std::shared_ptr<const Recognizer> recognizer);

  std::shared_ptr<const Snapshot> snapshot() const;

  void record_success(const std::string& model_id);
  /// Marks the server Down after `failure_threshold` consecutive failures.
  void record_failure(const std::string& model_id);
  void set_health(const std::string& model_id, Health health);

  /// Calls probe() on every server and updates health from the answers.
  void probe_all();

 private:
  template <typename F>
  void update(const std::string& model_id, F&& f);

  int failure_threshold_;
  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> current_;
};

/// Periodically probes a registry on a background thread.
class HealthProber {
 public:
  HealthProber(std::shared_ptr<ServerRegistry> registry, std::chrono::milliseconds interval);
  ~HealthProber();
  HealthProber(const HealthProber&) = delete;
  HealthProber& operator=(const HealthProber&) = delete;

 private:
  std::shared_ptr<ServerRegistry> registry_;
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::thread thread_;
};

struct RoutingPolicy {
  /// Prefer one server covering several modalities over several uni-modal
  /// servers covering the same set.
  bool prefer_multimodal = true;
};

struct Assignment {
  std::shared_ptr<const Recognizer> server;
  std::set<Modality> modalities;
};

struct DispatchPlan {
  MediaSegment segment;
  std::vector<Assignment> assignments;
  /// Present modalities no Up server accepts.
  std::set<Modality> unrouted;
};

/// Chooses the Up servers covering the largest servable subset of the
/// segment's modalities. Among covers of that subset the fewest servers win
/// (most servers when prefer_multimodal is off), then the tightest fit
/// (fewest accepted-but-absent modalities), then registry order. Throws
/// NoRoute when nothing present can be served.
DispatchPlan route(const MediaSegment& segment, const ServerRegistry::Snapshot& servers,
                   const RoutingPolicy& policy);

using Outcome = std::variant<SegmentScore, ScoringFailure>;

std::uint64_t segment_id_of(const Outcome& o) noexcept;

/// Runs every assignment (concurrently when there are several), records
/// server health, and fuses the successful channels. Partial failures are
/// attached to the SegmentScore; when nothing succeeds the result is a
/// ScoringFailure listing each modality's error.
Outcome dispatch_and_collect(const DispatchPlan& plan, const FusionConfig& fusion,
                             ServerRegistry* registry = nullptr);

/// Releases outcomes in strictly increasing segment_id order. Times are
/// caller-supplied seconds on any monotonic clock. A segment not delivered
/// within timeout_s of being expected is released as a Timeout failure when
/// it reaches the head of the line; a late delivery is then dropped.
class ReorderBuffer {
 public:
  explicit ReorderBuffer(double timeout_s = 30.0, std::uint64_t first_id = 0);

  void expect(std::uint64_t segment_id, double now);
  /// False when the outcome is stale (already released) or a duplicate.
  bool deliver(Outcome outcome, double now);
  std::vector<Outcome> release(double now);

  std::optional<double> next_deadline() const;
  std::uint64_t next_id() const noexcept { return next_id_; }
  /// Expected or delivered entries not yet released.
  std::size_t size() const noexcept { return slots_.size(); }
  std::size_t high_water() const noexcept { return high_water_; }

 private:
  struct Slot {
    double deadline = 0.0;
    std::optional<Outcome> outcome;
  };
  double timeout_s_;
  std::uint64_t next_id_;
  std::map<std::uint64_t, Slot> slots_;
  std::size_t high_water_ = 0;
};

/// ceil(timeout_s / min_segment_s) + in_flight_limit.
std::size_t reorder_bound(double timeout_s, double min_segment_s, std::size_t in_flight_limit);

struct PipelineOptions {
  /// Segments dispatched but not yet released; submit() blocks beyond it.
  std::size_t in_flight_limit = 8;
  double reorder_timeout_s = 30.0;
};

/// Per-session scoring pipeline: route, dispatch on a worker pool, reorder,
/// and hand each outcome to `sink` from a single thread in segment order.
class ScoringPipeline {
 public:
  using Sink = std::function<void(const MediaSegment&, const Outcome&)>;

  ScoringPipeline(std::shared_ptr<ServerRegistry> registry, RoutingPolicy policy,
                  FusionConfig fusion, PipelineOptions options, Sink sink,
                  std::uint64_t first_segment_id = 0);
  ~ScoringPipeline();
  ScoringPipeline(const ScoringPipeline&) = delete;
  ScoringPipeline& operator=(const ScoringPipeline&) = delete;

  /// Segment ids must be consecutive from first_segment_id.
  void submit(MediaSegment segment);
  /// Blocks until every submitted segment has reached the sink.
  void drain();

  std::size_t reorder_high_water() const;

 private:
  void worker_loop();
  void emitter_loop();
  double now() const;

  std::shared_ptr<ServerRegistry> registry_;
  RoutingPolicy policy_;
  FusionConfig fusion_;
  PipelineOptions options_;
  Sink sink_;
  std::chrono::steady_clock::time_point epoch_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  ReorderBuffer reorder_;
  std::deque<MediaSegment> jobs_;
  std::map<std::uint64_t, MediaSegment> segments_;
  std::uint64_t next_submit_id_;
  std::uint64_t submitted_ = 0;
  std::uint64_t emitted_ = 0;
  bool stop_ = false;
  std::vector<std::thread> workers_;
  std::thread emitter_;
};

}  // namespace memore
