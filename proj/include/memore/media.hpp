#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace memore {

/// 8-bit raster, row-major, `channels` interleaved samples per pixel
/// (1 = gray, 3 = RGB, 4 = RGBA).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image&, const Image&) = default;
};

std::vector<std::uint8_t> encode_png(const Image& image);
/// Throws PayloadUnreadable on malformed input.
Image decode_png(std::span<const std::uint8_t> bytes);

/// Mean luma in [0,1] per pixel, converted to one gray channel.
std::vector<float> to_gray(const Image& image);

/// Mono 16-bit PCM.
struct PcmAudio {
  int sample_rate = 16000;
  std::vector<std::int16_t> samples;

  double duration_s() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

std::vector<std::uint8_t> encode_wav(const PcmAudio& audio);
/// Accepts canonical RIFF/WAVE PCM 16-bit mono; throws IngestFormatError
/// for anything else.
PcmAudio decode_wav(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename. ENOSPC maps to StorageFull,
/// other failures to IoError.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace memore
