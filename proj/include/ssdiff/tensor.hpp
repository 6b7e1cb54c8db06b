#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdiff/error.hpp"

namespace ssdiff {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

/// Real-valued C x H x W pixel field, channel-planar and row-major.
///
/// Pixel values live in [-1, 1] by convention; nothing clamps them, since
/// intermediate diffusion states leave that range freely.
class ImageTensor {
 public:
  ImageTensor() = default;

  ImageTensor(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : shape_{channels, height, width} {
    check_shape(shape_);
    data_.assign(shape_.size(), fill);
  }

  ImageTensor(Shape shape, double fill = 0.0) : ImageTensor(shape.channels, shape.height, shape.width, fill) {}

  ImageTensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor payload has " + std::to_string(data_.size()) + " values, shape " +
                       to_string(shape_) + " needs " + std::to_string(shape_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t k) noexcept { return data_[k]; }
  double operator[](std::size_t k) const noexcept { return data_[k]; }

  double& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[(c * shape_.height + i) * shape_.width + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[(c * shape_.height + i) * shape_.width + j];
  }

  std::span<double> plane(std::size_t c) noexcept {
    return std::span<double>(data_).subspan(c * shape_.pixels(), shape_.pixels());
  }
  std::span<const double> plane(std::size_t c) const noexcept {
    return std::span<const double>(data_).subspan(c * shape_.pixels(), shape_.pixels());
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  ImageTensor& operator+=(const ImageTensor& rhs) {
    require_same_shape(rhs, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += rhs.data_[k];
    return *this;
  }
  ImageTensor& operator-=(const ImageTensor& rhs) {
    require_same_shape(rhs, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= rhs.data_[k];
    return *this;
  }
  ImageTensor& operator*=(double s) noexcept {
    for (auto& v : data_) v *= s;
    return *this;
  }

  void require_same_shape(const ImageTensor& other, const char* where) const {
    if (other.shape_ != shape_) {
      throw ShapeError(std::string(where) + ": shape mismatch " + to_string(shape_) + " vs " +
                       to_string(other.shape_));
    }
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  static void check_shape(const Shape& s) {
    if (s.channels != 1 && s.channels != 3) {
      throw ShapeError("image tensors have 1 or 3 channels, got " + std::to_string(s.channels));
    }
    if (s.height == 0 || s.width == 0) throw ShapeError("image tensor has zero spatial size");
  }

  Shape shape_{};
  std::vector<double> data_;
};

inline ImageTensor operator+(ImageTensor a, const ImageTensor& b) { return a += b; }
inline ImageTensor operator-(ImageTensor a, const ImageTensor& b) { return a -= b; }
inline ImageTensor operator*(double s, ImageTensor a) { return a *= s; }

inline double squared_norm(const ImageTensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v * v;
  return acc;
}

inline double l2_norm(const ImageTensor& t) { return std::sqrt(squared_norm(t)); }

/// H x W field of {0,1}; 1 marks breakage (or, generally, "selected").
class BinaryMask {
 public:
  BinaryMask() = default;

  BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0) : height_(height), width_(width) {
    if (height == 0 || width == 0) throw ShapeError("mask has zero spatial size");
    if (fill > 1) throw ShapeError("mask values must be 0 or 1");
    data_.assign(height * width, fill);
  }

  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (height == 0 || width == 0) throw ShapeError("mask has zero spatial size");
    if (data_.size() != height * width) throw ShapeError("mask payload does not match its dimensions");
    if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; })) {
      throw ShapeError("mask values must be 0 or 1");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint8_t operator[](std::size_t k) const noexcept { return data_[k]; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * width_ + j]; }
  void set(std::size_t i, std::size_t j, bool v) noexcept { data_[i * width_ + j] = v ? 1 : 0; }
  void set(std::size_t k, bool v) noexcept { data_[k] = v ? 1 : 0; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
  }
  bool none() const noexcept { return count() == 0; }

  bool matches(const Shape& s) const noexcept { return s.height == height_ && s.width == width_; }
  bool matches(std::size_t h, std::size_t w) const noexcept { return h == height_ && w == width_; }

  BinaryMask complement() const {
    BinaryMask out = *this;
    for (auto& v : out.data_) v = static_cast<std::uint8_t>(1 - v);
    return out;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> data_;
};

inline constexpr int kMaxLabel = 18;

/// Per-pixel semantic label codes in [0, 18] (CelebAMask-style 19 classes).
class ParsingMap {
 public:
  ParsingMap() = default;

  ParsingMap(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : ParsingMap(height, width, std::vector<std::uint8_t>(height * width, fill)) {}

  ParsingMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels)
      : height_(height), width_(width), data_(std::move(labels)) {
    if (height == 0 || width == 0) throw ShapeError("parsing map has zero spatial size");
    if (data_.size() != height * width) throw ShapeError("parsing map payload does not match its dimensions");
    for (auto v : data_) {
      if (v > kMaxLabel) throw ShapeError("parsing label " + std::to_string(v) + " outside [0,18]");
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint8_t operator[](std::size_t k) const noexcept { return data_[k]; }
  std::uint8_t operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * width_ + j]; }
  void set(std::size_t i, std::size_t j, std::uint8_t label) {
    if (label > kMaxLabel) throw ShapeError("parsing label outside [0,18]");
    data_[i * width_ + j] = label;
  }

  std::span<const std::uint8_t> data() const noexcept { return data_; }

  bool matches(const Shape& s) const noexcept { return s.height == height_ && s.width == width_; }

  friend bool operator==(const ParsingMap&, const ParsingMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace ssdiff
