#include <atomic>
#include <thread>

#include <httplib.h>
#include <gtest/gtest.h>

#include "memore/media.hpp"
#include "memore/remote.hpp"
#include "memore/segmenter.hpp"
#include "support.hpp"

using namespace memore;
using nlohmann::json;

namespace {

/// In-process inference server answering /v1/score with a handler.
class StubServer {
 public:
  using Handler = std::function<void(const json& request, httplib::Response&)>;

  explicit StubServer(Handler h) : handler_(std::move(h)) {
    server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      handler_(json::parse(req.body), res);
    });
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(healthy ? R"({"status":"ok","model_id":"stub","modalities":["text"]})" : "{}",
                      "application/json");
      if (!healthy) res.status = 503;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> calls{0};
  std::atomic<bool> healthy{true};

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json reply(const json& req, const std::map<std::string, EmotionDistribution>& dists) {
  json out = {{"protocol_version", 1},
              {"segment_id", req["segment_id"]},
              {"model_id", "stub"},
              {"latency_ms", 1.5},
              {"distributions", json::object()}};
  for (auto& [c, d] : dists) out["distributions"][c] = to_json(d);
  return out;
}

struct Fixture {
  test::TempDir dir;
  ClipStore store{dir.path()};
  MediaSegment segment;

  Fixture() {
    std::vector<AudioBlock> audio{{0.0, 16000, std::vector<std::int16_t>(16000, 100)}};
    std::vector<TranscriptSpan> text{{0.0, 1.0, "hello"}};
    segment = cut_segment(store, "sess", 7, {0, 1}, {}, audio, text, 24);
  }

  RemoteRecognizer client(const std::string& endpoint, RemoteOptions opt = {}) const {
    opt.backoff = std::chrono::milliseconds(5);
    opt.timeout = std::chrono::milliseconds(2000);
    return RemoteRecognizer({"remote", {Modality::Audio, Modality::Text}, RecognizerKind::Remote, endpoint},
                            store, opt);
  }
};

}  // namespace

TEST(Remote, EchoesStubDistribution) {
  Fixture f;
  std::mt19937_64 rng(1);
  auto d = test::random_distribution(rng);
  StubServer server([&](const json& req, httplib::Response& res) {
    EXPECT_EQ(req["session_id"], "sess");
    EXPECT_EQ(req["modalities"]["text"]["content"], "hello\n");
    EXPECT_TRUE(req["modalities"]["audio"].contains("wav_uri"));
    res.set_content(reply(req, {{"text", d}, {"audio", d}}).dump(), "application/json");
  });
  auto rec = f.client(server.endpoint());
  auto out = rec.score(f.segment, {Modality::Audio, Modality::Text});
  ASSERT_TRUE(out.failures.empty());
  // nine significant digits on the wire
  for (std::size_t k = 0; k < kEmotionCount; ++k)
    EXPECT_NEAR(out.scores.at(Channel::Text).distribution.mass()[k], d.mass()[k], 1e-8);
  EXPECT_EQ(out.scores.at(Channel::Audio).model_id, "stub");
  EXPECT_TRUE(rec.probe());
  server.healthy = false;
  EXPECT_FALSE(rec.probe());
}

TEST(Remote, InlineAudio) {
  Fixture f;
  StubServer server([&](const json& req, httplib::Response& res) {
    auto wav = protocol::base64_decode(req["modalities"]["audio"]["wav_base64"].get<std::string>());
    EXPECT_EQ(decode_wav(std::vector<std::uint8_t>(wav.begin(), wav.end())).samples.size(), 16000u);
    res.set_content(reply(req, {{"audio", EmotionDistribution()}}).dump(), "application/json");
  });
  RemoteOptions opt;
  opt.inline_audio = true;
  EXPECT_EQ(f.client(server.endpoint(), opt).score(f.segment, Modality::Audio).distribution,
            EmotionDistribution());
}

TEST(Remote, SumPointEightIsProtocolViolation) {
  Fixture f;
  StubServer server([&](const json& req, httplib::Response& res) {
    auto j = reply(req, {{"text", EmotionDistribution()}});
    for (auto& [k, v] : j["distributions"]["text"].items()) v = 0.1;
    res.set_content(j.dump(), "application/json");
  });
  EXPECT_ERROR_CODE(f.client(server.endpoint()).remote_score(f.segment, {Modality::Text}),
                    ErrorCode::ProtocolViolation);
  EXPECT_EQ(server.calls, 1);  // no retry for a bad answer
}

TEST(Remote, RetriesThenUnavailable) {
  Fixture f;
  StubServer server([](const json&, httplib::Response& res) { res.status = 503; });
  EXPECT_ERROR_CODE(f.client(server.endpoint()).remote_score(f.segment, {Modality::Text}),
                    ErrorCode::RemoteUnavailable);
  EXPECT_EQ(server.calls, 3);  // first try plus 2 retries
}

TEST(Remote, RecoversOnRetry) {
  Fixture f;
  StubServer server([&](const json& req, httplib::Response& res) {
    static std::atomic<int> n{0};
    if (n++ == 0) {
      res.status = 500;
      return;
    }
    res.set_content(reply(req, {{"text", EmotionDistribution()}}).dump(), "application/json");
  });
  EXPECT_NO_THROW(f.client(server.endpoint()).remote_score(f.segment, {Modality::Text}));
  EXPECT_EQ(server.calls, 2);
}

TEST(Remote, ClientErrorIsViolation) {
  Fixture f;
  StubServer server([](const json&, httplib::Response& res) {
    res.status = 422;
    res.set_content(R"({"error_code":"missing_field","message":"x"})", "application/json");
  });
  EXPECT_ERROR_CODE(f.client(server.endpoint()).remote_score(f.segment, {Modality::Text}),
                    ErrorCode::ProtocolViolation);
}

TEST(Remote, CoverageAndSegmentChecks) {
  Fixture f;
  StubServer partial([&](const json& req, httplib::Response& res) {
    res.set_content(reply(req, {{"text", EmotionDistribution()}}).dump(), "application/json");
  });
  auto rec = f.client(partial.endpoint());
  EXPECT_ERROR_CODE(rec.remote_score(f.segment, {Modality::Audio, Modality::Text}),
                    ErrorCode::ProtocolViolation);
  // all-or-nothing: the failure applies to both modalities
  auto out = rec.score(f.segment, {Modality::Audio, Modality::Text});
  EXPECT_TRUE(out.scores.empty());
  EXPECT_EQ(out.failures.size(), 2u);

  StubServer wrong_id([&](const json& req, httplib::Response& res) {
    auto j = reply(req, {{"text", EmotionDistribution()}});
    j["segment_id"] = 99;
    res.set_content(j.dump(), "application/json");
  });
  EXPECT_ERROR_CODE(f.client(wrong_id.endpoint()).remote_score(f.segment, {Modality::Text}),
                    ErrorCode::ProtocolViolation);
}

TEST(Remote, JointAudiovisualAnswer) {
  test::TempDir dir;
  ClipStore store(dir.path());
  Image img{2, 2, 1, {0, 0, 0, 0}};
  std::vector<TimedFrame> grid{{0.0, std::make_shared<const std::vector<std::uint8_t>>(encode_png(img)), 2, 2}};
  std::vector<AudioBlock> audio{{0.0, 16000, std::vector<std::int16_t>(16000, 100)}};
  auto seg = cut_segment(store, "s", 0, {0, 1}, grid, audio, {}, 24);
  StubServer server([&](const json& req, httplib::Response& res) {
    EXPECT_EQ(req["modalities"]["video"]["frame_count"], 1);
    res.set_content(reply(req, {{"audiovisual", EmotionDistribution()}}).dump(), "application/json");
  });
  RemoteRecognizer rec({"mm", {Modality::Video, Modality::Audio}, RecognizerKind::Remote, server.endpoint()},
                       store);
  auto out = rec.score(seg, {Modality::Video, Modality::Audio});
  ASSERT_EQ(out.scores.count(Channel::AudioVisual), 1u);
}

TEST(Remote, UnreachableEndpoint) {
  Fixture f;
  // bind then close to get a port with nothing listening
  int port;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  auto rec = f.client("http://127.0.0.1:" + std::to_string(port));
  EXPECT_ERROR_CODE(rec.remote_score(f.segment, {Modality::Text}), ErrorCode::RemoteUnavailable);
  EXPECT_FALSE(rec.probe());
}
