#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "memore/records.hpp"

namespace memore {

/// On-disk clip layout:
///   <root>/<session_id>/<segment_id>/{meta.json, frames/%06d.png,
///                                     audio.wav, transcript.txt}
/// Payload locators are paths relative to the root.
class ClipStore {
 public:
  explicit ClipStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  std::string segment_locator(const std::string& session_id, std::uint64_t segment_id) const;
  std::filesystem::path resolve(const std::string& locator) const;
  std::filesystem::path segment_dir(const std::string& session_id,
                                    std::uint64_t segment_id) const {
    return resolve(segment_locator(session_id, segment_id));
  }

  /// Reads meta.json back into a MediaSegment.
  MediaSegment load_segment(const std::string& session_id, std::uint64_t segment_id) const;

 private:
  std::filesystem::path root_;
};

}  // namespace memore
