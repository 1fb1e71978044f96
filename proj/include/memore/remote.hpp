#pragma once

#include <chrono>
#include <set>

#include "memore/clip_store.hpp"
#include "memore/protocol.hpp"
#include "memore/recognizers.hpp"

namespace memore {

struct RemoteOptions {
  int retries = 2;
  std::chrono::milliseconds backoff{250};
  std::chrono::milliseconds timeout{10000};
  /// Concurrent requests allowed per endpoint, shared by every client of
  /// that endpoint in the process.
  std::size_t max_in_flight = 4;
  /// Send audio inline as base64 when under 1 MiB instead of by locator.
  bool inline_audio = false;
};

/// Client for an inference server speaking protocol version 1
/// (POST /v1/score, GET /v1/health).
class RemoteRecognizer final : public Recognizer {
 public:
  RemoteRecognizer(RecognizerDescriptor descriptor, const ClipStore& store,
                   RemoteOptions options = {});

  /// All-or-nothing: a failure applies to every requested modality.
  ScoreOutcome score(const MediaSegment& segment,
                     const std::set<Modality>& modalities) const override;
  using Recognizer::score;

  /// Throws RemoteUnavailable once retries are exhausted, ProtocolViolation
  /// for a 4xx reply or a response failing validation (never renormalized),
  /// including one that does not cover every requested modality.
  protocol::ScoreResponse remote_score(const MediaSegment& segment,
                                       const std::set<Modality>& modalities) const;

  protocol::ScoreRequest build_request(const MediaSegment& segment,
                                       const std::set<Modality>& modalities) const;

  bool probe() const override;

 protected:
  EmotionDistribution score_modality(const MediaSegment& segment,
                                     Modality modality) const override;

 private:
  const ClipStore& store_;
  RemoteOptions options_;
};

}  // namespace memore
