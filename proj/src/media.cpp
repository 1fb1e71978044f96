#include "memore/media.hpp"

#include <png.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "memore/error.hpp"

namespace memore {

namespace {

png_uint_32 png_format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default:
      throw Error(ErrorCode::InvalidArgument, "unsupported channel count " + std::to_string(channels));
  }
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw Error(ErrorCode::InvalidArgument, "image dimensions do not match pixel buffer");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = png_format_for(image.channels);

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("png encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::PayloadUnreadable, std::string("png decode failed: ") + img.message);
  }
  Image out;
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  img.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : PNG_FORMAT_GRAY;
  out.channels = color ? (alpha ? 4 : 3) : 1;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::PayloadUnreadable, std::string("png decode failed: ") + img.message);
  }
  return out;
}

std::vector<float> to_gray(const Image& image) {
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  std::vector<float> gray(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = &image.pixels[i * image.channels];
    float v = image.channels >= 3 ? 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2] : px[0];
    gray[i] = v / 255.0f;
  }
  return gray;
}

std::vector<std::uint8_t> encode_wav(const PcmAudio& audio) {
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  const char* riff = "RIFF";
  out.insert(out.end(), riff, riff + 4);
  put_u32(out, 36 + data_bytes);
  const char* wave_fmt = "WAVEfmt ";
  out.insert(out.end(), wave_fmt, wave_fmt + 8);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  const char* data = "data";
  out.insert(out.end(), data, data + 4);
  put_u32(out, data_bytes);
  for (auto s : audio.samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

PcmAudio decode_wav(std::span<const std::uint8_t> bytes) {
  auto fail = [](const std::string& why) {
    return Error(ErrorCode::IngestFormatError, "wav: " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  PcmAudio audio;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= bytes.size()) {
    const std::uint32_t chunk = get_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (body + chunk > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(bytes.data() + at, "fmt ", 4) == 0) {
      if (chunk < 16) throw fail("short fmt chunk");
      if (get_u16(bytes, body) != 1) throw fail("only PCM is supported");
      if (get_u16(bytes, body + 2) != 1) throw fail("only mono is supported");
      audio.sample_rate = static_cast<int>(get_u32(bytes, body + 4));
      if (get_u16(bytes, body + 14) != 16) throw fail("only 16-bit samples are supported");
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + at, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      audio.samples.resize(chunk / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        audio.samples[i] = static_cast<std::int16_t>(get_u16(bytes, body + 2 * i));
      }
      return audio;
    }
    at = body + chunk + (chunk & 1);
  }
  throw fail("no data chunk");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) {
    const int err = errno;
    throw Error(err == ENOSPC ? ErrorCode::StorageFull : ErrorCode::IoError,
                "cannot write " + path.string() + ": " + std::strerror(err));
  }
  const std::size_t written = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  const int write_err = written == bytes.size() ? 0 : errno;
  const bool closed = std::fclose(f) == 0;
  if (written != bytes.size() || !closed) {
    const int err = write_err ? write_err : errno;
    std::remove(tmp.c_str());
    throw Error(err == ENOSPC ? ErrorCode::StorageFull : ErrorCode::IoError,
                "cannot write " + path.string() + ": " + std::strerror(err));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace memore
