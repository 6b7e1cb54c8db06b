#pragma once

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "ssdiff/bytes.hpp"
#include "ssdiff/error.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff {

enum class PixelRange {
  symmetric,  // p -> 2p/255 - 1
  unit,       // p -> p/255
};

namespace detail {

struct Raster {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> interleaved;
};

inline Raster read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing file: " + path.string());

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  // The simplified API would silently narrow 16-bit data; refuse it instead.
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw IoError("unsupported bit depth (16-bit) in " + path.string());
  }
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw IoError("zero-sized raster in " + path.string());
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  Raster r;
  r.channels = color ? 3 : 1;
  r.height = image.height;
  r.width = image.width;
  r.interleaved.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.interleaved.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return r;
}

inline void write_png(const std::filesystem::path& path, std::size_t channels, std::size_t height,
                      std::size_t width, const std::vector<std::uint8_t>& interleaved) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, interleaved.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

inline std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

/// Loads an 8-bit grayscale or RGB PNG into a channel-planar tensor.
inline ImageTensor load_image(const std::filesystem::path& path, PixelRange range = PixelRange::symmetric) {
  const auto r = detail::read_png(path);
  ImageTensor out(r.channels, r.height, r.width);
  for (std::size_t i = 0; i < r.height; ++i) {
    for (std::size_t j = 0; j < r.width; ++j) {
      for (std::size_t c = 0; c < r.channels; ++c) {
        const double p = r.interleaved[(i * r.width + j) * r.channels + c];
        out.at(c, i, j) = range == PixelRange::symmetric ? 2.0 * p / 255.0 - 1.0 : p / 255.0;
      }
    }
  }
  return out;
}

/// Quantizes a [-1,1] tensor to 8 bits and writes it as PNG. Values outside the
/// range are clamped.
inline void save_png(const ImageTensor& t, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(t.size());
  for (std::size_t i = 0; i < t.height(); ++i) {
    for (std::size_t j = 0; j < t.width(); ++j) {
      for (std::size_t c = 0; c < t.channels(); ++c) {
        const double p = std::round((std::clamp(t.at(c, i, j), -1.0, 1.0) + 1.0) * 127.5);
        buf[(i * t.width() + j) * t.channels() + c] = static_cast<std::uint8_t>(p);
      }
    }
  }
  detail::write_png(path, t.channels(), t.height(), t.width(), buf);
}

/// Grayscale PNG mask: 0..127 -> 0, 128..255 -> 1. Color rasters are rejected.
inline BinaryMask load_mask(const std::filesystem::path& path) {
  const auto r = detail::read_png(path);
  if (r.channels != 1) throw IoError("mask must be a grayscale PNG: " + path.string());
  std::vector<std::uint8_t> bits(r.interleaved.size());
  for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = r.interleaved[k] >= 128 ? 1 : 0;
  return BinaryMask(r.height, r.width, std::move(bits));
}

inline void save_mask(const BinaryMask& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(m.size());
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = m[k] ? 255 : 0;
  detail::write_png(path, 1, m.height(), m.width(), buf);
}

/// Grayscale PNG whose pixel value is the label code.
inline ParsingMap load_parsing(const std::filesystem::path& path) {
  auto r = detail::read_png(path);
  if (r.channels != 1) throw IoError("parsing map must be a grayscale PNG: " + path.string());
  for (auto v : r.interleaved) {
    if (v > kMaxLabel) {
      throw IoError("parsing map " + path.string() + " holds label " + std::to_string(v) + " outside [0,18]");
    }
  }
  return ParsingMap(r.height, r.width, std::move(r.interleaved));
}

inline void save_parsing(const ParsingMap& p, const std::filesystem::path& path) {
  detail::write_png(path, 1, p.height(), p.width(), {p.data().begin(), p.data().end()});
}

// ---------------------------------------------------------------------------
// SSDT float tensor file:
//   "SSDT" | u32 version=1 | u32 ndim | ndim x u32 dims | f32 payload (LE, row-major)

inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 31;

inline std::vector<std::uint8_t> encode_tensor(const ImageTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(24 + 4 * t.size());
  bytes::put_magic(out, "SSDT");
  bytes::put_u32(out, kTensorFormatVersion);
  bytes::put_u32(out, 3);
  bytes::put_u32(out, static_cast<std::uint32_t>(t.channels()));
  bytes::put_u32(out, static_cast<std::uint32_t>(t.height()));
  bytes::put_u32(out, static_cast<std::uint32_t>(t.width()));
  for (double v : t.data()) bytes::put_f32(out, static_cast<float>(v));
  return out;
}

/// Accepts ndim 2 (H, W; single channel) or 3 (C, H, W).
inline ImageTensor decode_tensor(std::span<const std::uint8_t> in) {
  if (!bytes::has_magic(in, "SSDT")) throw IoError("bad magic");
  if (in.size() < 12) throw IoError("short header");
  const auto version = bytes::get_u32(in, 4);
  if (version != kTensorFormatVersion) throw IoError("unsupported tensor version " + std::to_string(version));
  const auto ndim = bytes::get_u32(in, 8);
  if (ndim != 2 && ndim != 3) throw IoError("unsupported tensor rank " + std::to_string(ndim));
  if (in.size() < 12 + 4 * std::size_t{ndim}) throw IoError("short header");

  std::array<std::uint64_t, 3> dims{1, 1, 1};
  for (std::uint32_t d = 0; d < ndim; ++d) dims[3 - ndim + d] = bytes::get_u32(in, 12 + 4 * d);
  std::uint64_t count = 1;
  for (auto d : dims) {
    if (d == 0) throw IoError("zero-sized tensor dimension");
    if (count > kMaxTensorElements / d) throw IoError("dimension overflow");
    count *= d;
  }
  if (count > kMaxTensorElements) throw IoError("dimension overflow");

  const std::size_t offset = 12 + 4 * std::size_t{ndim};
  if (in.size() < offset + 4 * count) throw IoError("short payload");
  if (in.size() > offset + 4 * count) throw IoError("trailing bytes after payload");

  std::vector<double> values(count);
  for (std::size_t k = 0; k < count; ++k) values[k] = bytes::get_f32(in, offset + 4 * k);
  try {
    return ImageTensor(Shape{dims[0], dims[1], dims[2]}, std::move(values));
  } catch (const ShapeError& e) {
    throw IoError(std::string("invalid tensor shape: ") + e.what());
  }
}

inline void save_tensor(const ImageTensor& t, const std::filesystem::path& path) {
  detail::write_all(path, encode_tensor(t));
}

inline ImageTensor load_tensor(const std::filesystem::path& path) { return decode_tensor(detail::read_all(path)); }

/// Image loader that dispatches on extension: .ssdt tensors or PNG rasters.
inline ImageTensor load_any_image(const std::filesystem::path& path) {
  if (path.extension() == ".ssdt") return load_tensor(path);
  return load_image(path);
}

// ---------------------------------------------------------------------------
// SSH1 saturation histogram file: "SSH1" | 64 x f32 LE.

inline constexpr std::size_t kSaturationBins = 64;

inline void save_histogram(const std::vector<double>& hist, const std::filesystem::path& path) {
  if (hist.size() != kSaturationBins) throw IoError("histogram must have 64 bins");
  std::vector<std::uint8_t> out;
  bytes::put_magic(out, "SSH1");
  for (double v : hist) bytes::put_f32(out, static_cast<float>(v));
  detail::write_all(path, out);
}

inline std::vector<double> load_histogram(const std::filesystem::path& path) {
  const auto in = detail::read_all(path);
  if (!bytes::has_magic(in, "SSH1")) throw IoError("bad magic");
  if (in.size() < 4 + 4 * kSaturationBins) throw IoError("short payload");
  std::vector<double> hist(kSaturationBins);
  for (std::size_t k = 0; k < kSaturationBins; ++k) hist[k] = bytes::get_f32(in, 4 + 4 * k);
  return hist;
}

}  // namespace ssdiff
