#include "memore/router.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <tuple>

namespace memore {

std::string_view to_string(Health h) noexcept { return h == Health::Up ? "up" : "down"; }

// ---------------------------------------------------------------------------
// Registry

ServerRegistry::ServerRegistry(int failure_threshold)
    : failure_threshold_(failure_threshold), current_(std::make_shared<const Snapshot>()) {}

void ServerRegistry::add(std::shared_ptr<const Recognizer> recognizer) {
  std::lock_guard lock(mu_);
  for (const auto& s : *current_) {
    if (s.recognizer->descriptor().model_id == recognizer->descriptor().model_id) {
      throw Error(ErrorCode::InvalidConfig,
                  "duplicate model_id '" + recognizer->descriptor().model_id + "'");
    }
  }
  auto next = std::make_shared<Snapshot>(*current_);
  next->push_back(ServerState{std::move(recognizer), Health::Up, std::chrono::system_clock::now(), 0});
  current_ = std::move(next);
}

std::shared_ptr<const ServerRegistry::Snapshot> ServerRegistry::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

template <typename F>
void ServerRegistry::update(const std::string& model_id, F&& f) {
  std::lock_guard lock(mu_);
  auto next = std::make_shared<Snapshot>(*current_);
  for (auto& s : *next) {
    if (s.recognizer->descriptor().model_id == model_id) f(s);
  }
  current_ = std::move(next);
}

void ServerRegistry::record_success(const std::string& model_id) {
  update(model_id, [](ServerState& s) {
    s.consecutive_failures = 0;
    s.health = Health::Up;
    s.last_seen = std::chrono::system_clock::now();
  });
}

void ServerRegistry::record_failure(const std::string& model_id) {
  update(model_id, [this](ServerState& s) {
    ++s.consecutive_failures;
    if (s.consecutive_failures >= failure_threshold_) s.health = Health::Down;
  });
}

void ServerRegistry::set_health(const std::string& model_id, Health health) {
  update(model_id, [health](ServerState& s) {
    s.health = health;
    if (health == Health::Up) s.consecutive_failures = 0;
  });
}

void ServerRegistry::probe_all() {
  auto snap = snapshot();
  for (const auto& s : *snap) {
    const auto& id = s.recognizer->descriptor().model_id;
    if (s.recognizer->probe()) {
      record_success(id);
    } else {
      record_failure(id);
    }
  }
}

HealthProber::HealthProber(std::shared_ptr<ServerRegistry> registry,
                           std::chrono::milliseconds interval)
    : registry_(std::move(registry)), interval_(interval) {
  thread_ = std::thread([this] {
    std::unique_lock lock(mu_);
    while (!stop_) {
      lock.unlock();
      registry_->probe_all();
      lock.lock();
      cv_.wait_for(lock, interval_, [this] { return stop_; });
    }
  });
}

HealthProber::~HealthProber() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

// ---------------------------------------------------------------------------
// Routing

DispatchPlan route(const MediaSegment& segment, const ServerRegistry::Snapshot& servers,
                   const RoutingPolicy& policy) {
  const auto& present = segment.modalities_present;
  if (present.empty()) {
    throw Error(ErrorCode::NoRoute, "segment " + std::to_string(segment.segment_id) +
                                        " has no modalities to route");
  }

  std::vector<std::size_t> up;
  std::set<Modality> coverable;
  for (std::size_t i = 0; i < servers.size(); ++i) {
    if (servers[i].health != Health::Up) continue;
    bool useful = false;
    for (auto m : servers[i].recognizer->descriptor().modalities) {
      if (present.contains(m)) {
        coverable.insert(m);
        useful = true;
      }
    }
    if (useful) up.push_back(i);
  }
  if (coverable.empty()) {
    throw Error(ErrorCode::NoRoute, "no Up server accepts any modality of segment " +
                                        std::to_string(segment.segment_id));
  }

  // At most |coverable| <= 3 servers are ever needed, so enumerate covers
  // of size 1..3 among the useful Up servers.
  using Cost = std::tuple<long, long, std::vector<std::size_t>>;
  std::optional<Cost> best;
  std::vector<std::size_t> pick;
  const std::size_t max_size = std::min(up.size(), coverable.size());
  std::function<void(std::size_t)> search = [&](std::size_t from) {
    if (!pick.empty()) {
      std::set<Modality> covered;
      long extra = 0;
      for (auto idx : pick) {
        for (auto m : servers[idx].recognizer->descriptor().modalities) {
          if (present.contains(m)) {
            covered.insert(m);
          } else {
            ++extra;
          }
        }
      }
      if (covered == coverable) {
        const long count = static_cast<long>(pick.size());
        Cost cost{policy.prefer_multimodal ? count : -count, extra, pick};
        if (!best || cost < *best) best = cost;
      }
    }
    if (pick.size() == max_size) return;
    for (std::size_t k = from; k < up.size(); ++k) {
      pick.push_back(up[k]);
      search(k + 1);
      pick.pop_back();
    }
  };
  search(0);

  DispatchPlan plan;
  plan.segment = segment;
  std::set<Modality> assigned;
  for (auto idx : std::get<2>(*best)) {
    Assignment a{servers[idx].recognizer, {}};
    for (auto m : a.server->descriptor().modalities) {
      if (present.contains(m) && !assigned.contains(m)) {
        a.modalities.insert(m);
        assigned.insert(m);
      }
    }
    if (!a.modalities.empty()) plan.assignments.push_back(std::move(a));
  }
  for (auto m : present) {
    if (!assigned.contains(m)) plan.unrouted.insert(m);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Dispatch

std::uint64_t segment_id_of(const Outcome& o) noexcept {
  return std::visit([](const auto& v) { return v.segment_id; }, o);
}

namespace {

bool is_server_fault(ErrorCode code) {
  return code == ErrorCode::RemoteUnavailable || code == ErrorCode::ProtocolViolation;
}

}  // namespace

Outcome dispatch_and_collect(const DispatchPlan& plan, const FusionConfig& fusion,
                             ServerRegistry* registry) {
  const auto started = std::chrono::steady_clock::now();
  const MediaSegment& seg = plan.segment;

  std::vector<ScoreOutcome> results(plan.assignments.size());
  if (plan.assignments.size() == 1) {
    results[0] = plan.assignments[0].server->score(seg, plan.assignments[0].modalities);
  } else {
    std::vector<std::future<ScoreOutcome>> futures;
    for (const auto& a : plan.assignments) {
      futures.push_back(std::async(std::launch::async, [&seg, &a] {
        return a.server->score(seg, a.modalities);
      }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
  }

  std::map<Channel, ChannelScore> scores;
  std::map<Modality, std::string> failures;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& model_id = plan.assignments[i].server->descriptor().model_id;
    bool server_fault = false;
    for (const auto& [m, err] : results[i].failures) {
      failures.emplace(m, describe(err));
      server_fault = server_fault || is_server_fault(err.code());
    }
    if (registry) {
      if (server_fault) {
        registry->record_failure(model_id);
      } else {
        registry->record_success(model_id);
      }
    }
    for (auto& [c, s] : results[i].scores) scores.emplace(c, std::move(s));
  }
  for (auto m : plan.unrouted) {
    failures.emplace(m, "NoRoute: no Up server accepts " + std::string(to_string(m)));
  }

  if (scores.empty()) {
    ScoringFailure f;
    f.segment_id = seg.segment_id;
    f.reason = ErrorCode::ScoringFailed;
    f.errors = std::move(failures);
    f.message = "every modality failed";
    return f;
  }

  std::map<Channel, EmotionDistribution> inputs;
  for (const auto& [c, s] : scores) inputs.emplace(c, s.distribution);
  SegmentScore out;
  out.segment_id = seg.segment_id;
  out.t_start = seg.t_start;
  out.t_end = seg.t_end;
  out.fused = fuse(inputs, fusion);
  out.dominant = dominant(out.fused);
  out.per_modality = std::move(scores);
  out.failures = std::move(failures);
  out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                       .count();
  return out;
}

// ---------------------------------------------------------------------------
// Reorder

ReorderBuffer::ReorderBuffer(double timeout_s, std::uint64_t first_id)
    : timeout_s_(timeout_s), next_id_(first_id) {}

void ReorderBuffer::expect(std::uint64_t segment_id, double now) {
  if (segment_id < next_id_) return;
  auto [it, inserted] = slots_.try_emplace(segment_id);
  if (inserted) it->second.deadline = now + timeout_s_;
  high_water_ = std::max(high_water_, slots_.size());
}

bool ReorderBuffer::deliver(Outcome outcome, double now) {
  const auto id = segment_id_of(outcome);
  if (id < next_id_) return false;
  auto [it, inserted] = slots_.try_emplace(id);
  if (inserted) it->second.deadline = now + timeout_s_;
  if (it->second.outcome) return false;
  it->second.outcome = std::move(outcome);
  high_water_ = std::max(high_water_, slots_.size());
  return true;
}

std::vector<Outcome> ReorderBuffer::release(double now) {
  std::vector<Outcome> out;
  while (!slots_.empty()) {
    auto it = slots_.begin();
    if (it->first != next_id_) {
      // A gap before the first known slot: nothing can be released until
      // the missing id is expected or delivered.
      break;
    }
    if (it->second.outcome) {
      out.push_back(std::move(*it->second.outcome));
    } else if (now > it->second.deadline) {
      ScoringFailure f;
      f.segment_id = it->first;
      f.reason = ErrorCode::Timeout;
      f.message = "no result within " + std::to_string(timeout_s_) + " s";
      out.emplace_back(std::move(f));
    } else {
      break;
    }
    slots_.erase(it);
    ++next_id_;
  }
  return out;
}

std::optional<double> ReorderBuffer::next_deadline() const {
  if (slots_.empty() || slots_.begin()->first != next_id_ || slots_.begin()->second.outcome) {
    return std::nullopt;
  }
  return slots_.begin()->second.deadline;
}

std::size_t reorder_bound(double timeout_s, double min_segment_s, std::size_t in_flight_limit) {
  return static_cast<std::size_t>(std::ceil(timeout_s / min_segment_s)) + in_flight_limit;
}

// ---------------------------------------------------------------------------
// Pipeline

ScoringPipeline::ScoringPipeline(std::shared_ptr<ServerRegistry> registry, RoutingPolicy policy,
                                 FusionConfig fusion, PipelineOptions options, Sink sink,
                                 std::uint64_t first_segment_id)
    : registry_(std::move(registry)),
      policy_(policy),
      fusion_(std::move(fusion)),
      options_(options),
      sink_(std::move(sink)),
      epoch_(std::chrono::steady_clock::now()),
      reorder_(options.reorder_timeout_s, first_segment_id),
      next_submit_id_(first_segment_id) {
  if (options_.in_flight_limit == 0) options_.in_flight_limit = 1;
  for (std::size_t i = 0; i < options_.in_flight_limit; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
  emitter_ = std::thread([this] { emitter_loop(); });
}

ScoringPipeline::~ScoringPipeline() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
  emitter_.join();
}

double ScoringPipeline::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

void ScoringPipeline::submit(MediaSegment segment) {
  std::unique_lock lock(mu_);
  if (segment.segment_id != next_submit_id_) {
    throw Error(ErrorCode::InvalidArgument,
                "segment ids must be consecutive: expected " + std::to_string(next_submit_id_) +
                    ", got " + std::to_string(segment.segment_id));
  }
  cv_.wait(lock, [&] { return stop_ || submitted_ - emitted_ < options_.in_flight_limit; });
  if (stop_) throw Error(ErrorCode::SessionClosed, "pipeline stopped");
  ++next_submit_id_;
  ++submitted_;
  reorder_.expect(segment.segment_id, now());
  segments_.emplace(segment.segment_id, segment);
  jobs_.push_back(std::move(segment));
  cv_.notify_all();
}

void ScoringPipeline::drain() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return stop_ || emitted_ == submitted_; });
}

std::size_t ScoringPipeline::reorder_high_water() const {
  std::lock_guard lock(mu_);
  return reorder_.high_water();
}

void ScoringPipeline::worker_loop() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [&] { return stop_ || !jobs_.empty(); });
    if (stop_) return;
    MediaSegment seg = std::move(jobs_.front());
    jobs_.pop_front();
    auto snapshot = registry_->snapshot();
    lock.unlock();

    Outcome outcome;
    if (seg.empty) {
      outcome = ScoringFailure{seg.segment_id, ErrorCode::EmptyWindow, {}, "no modality had data"};
    } else {
      try {
        outcome = dispatch_and_collect(route(seg, *snapshot, policy_), fusion_, registry_.get());
      } catch (const Error& e) {
        outcome = ScoringFailure{seg.segment_id, e.code(), {}, e.what()};
      }
    }

    lock.lock();
    reorder_.deliver(std::move(outcome), now());
    cv_.notify_all();
  }
}

void ScoringPipeline::emitter_loop() {
  std::unique_lock lock(mu_);
  while (!stop_) {
    auto ready = reorder_.release(now());
    if (ready.empty()) {
      if (auto deadline = reorder_.next_deadline()) {
        const auto wake = epoch_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(*deadline)) +
                          std::chrono::milliseconds(1);
        cv_.wait_until(lock, wake);
      } else {
        cv_.wait(lock);
      }
      continue;
    }
    std::vector<std::pair<MediaSegment, Outcome>> batch;
    for (auto& o : ready) {
      auto node = segments_.extract(segment_id_of(o));
      batch.emplace_back(std::move(node.mapped()), std::move(o));
    }
    lock.unlock();
    for (const auto& [seg, o] : batch) sink_(seg, o);
    lock.lock();
    emitted_ += batch.size();
    cv_.notify_all();
  }
}

}  // namespace memore
