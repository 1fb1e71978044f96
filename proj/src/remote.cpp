#include "memore/remote.hpp"

#include <httplib.h>

#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "memore/media.hpp"

namespace memore {

namespace fs = std::filesystem;

namespace {

class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_;
  std::size_t active_ = 0;
};

InFlightLimiter& limiter_for(const std::string& endpoint, std::size_t limit) {
  static std::mutex mu;
  static std::unordered_map<std::string, std::unique_ptr<InFlightLimiter>> limiters;
  std::lock_guard lock(mu);
  auto& slot = limiters[endpoint];
  if (!slot) slot = std::make_unique<InFlightLimiter>(limit);
  return *slot;
}

struct Permit {
  explicit Permit(InFlightLimiter& l) : limiter(l) { limiter.acquire(); }
  ~Permit() { limiter.release(); }
  Permit(const Permit&) = delete;
  Permit& operator=(const Permit&) = delete;
  InFlightLimiter& limiter;
};

std::string file_uri(const fs::path& p) {
  return "file://" + fs::absolute(p).lexically_normal().string();
}

}  // namespace

RemoteRecognizer::RemoteRecognizer(RecognizerDescriptor descriptor, const ClipStore& store,
                                   RemoteOptions options)
    : Recognizer(std::move(descriptor)), store_(store), options_(options) {}

protocol::ScoreRequest RemoteRecognizer::build_request(const MediaSegment& segment,
                                                       const std::set<Modality>& modalities) const {
  protocol::ScoreRequest req;
  req.session_id = segment.session_id;
  req.segment_id = segment.segment_id;
  for (auto m : modalities) {
    check_supported(segment, m);
    const fs::path path = store_.resolve(segment.payload_refs.at(m));
    switch (m) {
      case Modality::Video: {
        std::uint64_t count = 0;
        std::error_code ec;
        for (const auto& e : fs::directory_iterator(path, ec)) {
          if (e.path().extension() == ".png") ++count;
        }
        req.video = protocol::VideoPayload{file_uri(path), count, segment.frame_rate};
        break;
      }
      case Modality::Audio: {
        protocol::AudioPayload a;
        auto bytes = read_file(path);
        a.sample_rate = decode_wav(bytes).sample_rate;
        if (options_.inline_audio && bytes.size() < protocol::kMaxInlineBytes) {
          a.wav_base64 = protocol::base64_encode(
              std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
        } else {
          a.wav_uri = file_uri(path);
        }
        req.audio = std::move(a);
        break;
      }
      case Modality::Text: {
        auto bytes = read_file(path);
        req.text = protocol::TextPayload{std::string(bytes.begin(), bytes.end())};
        break;
      }
    }
  }
  return req;
}

protocol::ScoreResponse RemoteRecognizer::remote_score(const MediaSegment& segment,
                                                       const std::set<Modality>& modalities) const {
  const std::string body = to_json(build_request(segment, modalities)).dump();
  const std::string& endpoint = *descriptor().endpoint;
  Permit permit(limiter_for(endpoint, options_.max_in_flight));

  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff);
    httplib::Client client(endpoint);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto res = client.Post("/v1/score", body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw protocol::ProtocolError(protocol::Violation::WrongType,
                                    "server rejected request with HTTP " +
                                        std::to_string(res->status) + ": " + res->body);
    }
    auto resp = protocol::parse_response_text(res->body);
    if (resp.segment_id != segment.segment_id) {
      throw protocol::ProtocolError(protocol::Violation::SegmentMismatch,
                                    "response segment_id " + std::to_string(resp.segment_id) +
                                        " does not match request " +
                                        std::to_string(segment.segment_id));
    }
    std::set<Modality> covered;
    for (const auto& [c, _] : resp.distributions) {
      for (auto m : modalities_of(c)) {
        if (!modalities.contains(m)) {
          throw protocol::ProtocolError(protocol::Violation::UnknownField,
                                        "response scores unrequested channel " +
                                            std::string(to_string(c)));
        }
        covered.insert(m);
      }
    }
    if (covered != modalities) {
      throw protocol::ProtocolError(protocol::Violation::MissingField,
                                    "response does not cover every requested modality");
    }
    return resp;
  }
  throw Error(ErrorCode::RemoteUnavailable,
              endpoint + " unavailable after " + std::to_string(options_.retries + 1) +
                  " attempts: " + last_error);
}

ScoreOutcome RemoteRecognizer::score(const MediaSegment& segment,
                                     const std::set<Modality>& modalities) const {
  ScoreOutcome out;
  try {
    auto resp = remote_score(segment, modalities);
    for (auto& [c, d] : resp.distributions) {
      out.scores.emplace(c, ChannelScore{d, resp.model_id});
    }
  } catch (const Error& e) {
    for (auto m : modalities) out.failures.emplace(m, e);
  }
  return out;
}

EmotionDistribution RemoteRecognizer::score_modality(const MediaSegment& segment,
                                                     Modality modality) const {
  auto resp = remote_score(segment, {modality});
  return resp.distributions.begin()->second;
}

bool RemoteRecognizer::probe() const {
  httplib::Client client(*descriptor().endpoint);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  auto res = client.Get("/v1/health");
  if (!res || res->status != 200) return false;
  try {
    return protocol::parse_health(nlohmann::json::parse(res->body)).status == "ok";
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace memore
