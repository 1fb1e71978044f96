#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memore {

// Every failure surfaced by the library carries one of these codes so that
// callers (router, session service, HTTP layer) can branch on the kind.
enum class ErrorCode {
  InvalidArgument,
  AllZero,
  EmptyStream,
  NoTranscript,
  EmptyWindow,
  StorageFull,
  IoError,
  TooShort,
  UnsupportedModality,
  PayloadUnreadable,
  RemoteUnavailable,
  ProtocolViolation,
  NoModalities,
  NoRoute,
  ScoringFailed,
  Timeout,
  NoGroundTruth,
  EmptyAfterMapping,
  InvalidConfig,
  BindFailure,
  StorageUnwritable,
  UnknownSession,
  SessionClosed,
  SessionStillOpen,
  IngestFormatError,
  NoOpenTag,
  DuplicateOpenTag,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace memore
