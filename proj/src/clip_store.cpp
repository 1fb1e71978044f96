#include "memore/clip_store.hpp"

#include <json.hpp>

#include "memore/media.hpp"

namespace memore {

ClipStore::ClipStore(std::filesystem::path root) : root_(std::move(root)) {}

std::string ClipStore::segment_locator(const std::string& session_id,
                                       std::uint64_t segment_id) const {
  return session_id + "/" + std::to_string(segment_id);
}

std::filesystem::path ClipStore::resolve(const std::string& locator) const {
  std::filesystem::path rel(locator);
  if (rel.is_absolute()) return rel;
  for (const auto& part : rel) {
    if (part == "..") {
      throw Error(ErrorCode::PayloadUnreadable, "locator escapes the clip store: " + locator);
    }
  }
  return root_ / rel;
}

MediaSegment ClipStore::load_segment(const std::string& session_id,
                                     std::uint64_t segment_id) const {
  auto bytes = read_file(segment_dir(session_id, segment_id) / "meta.json");
  auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::PayloadUnreadable, "meta.json is not valid JSON");
  }
  return media_segment_from_json(j);
}

}  // namespace memore
