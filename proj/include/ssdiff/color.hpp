#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "ssdiff/tensor.hpp"

namespace ssdiff {

/// HSV saturation of a 3-channel [-1,1] image, as a 1-channel field in [0,1].
inline ImageTensor rgb_to_saturation(const ImageTensor& img) {
  if (img.channels() != 3) throw ShapeError("rgb_to_saturation needs a 3-channel image");
  ImageTensor out(1, img.height(), img.width());
  const auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto s = out.plane(0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double rr = std::clamp((r[k] + 1.0) * 0.5, 0.0, 1.0);
    const double gg = std::clamp((g[k] + 1.0) * 0.5, 0.0, 1.0);
    const double bb = std::clamp((b[k] + 1.0) * 0.5, 0.0, 1.0);
    const double hi = std::max({rr, gg, bb});
    const double lo = std::min({rr, gg, bb});
    s[k] = hi > 0.0 ? (hi - lo) / hi : 0.0;
  }
  return out;
}

// Ruderman l-alpha-beta space (the decorrelated space of classical color
// transfer). Inputs are [-1,1] RGB; remapped to (0,1] with a small floor
// before the log.
namespace lab {

inline constexpr double kFloor = 1e-4;

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr Mat3 kRgbToLms = {{{0.3811, 0.5783, 0.0402}, {0.1967, 0.7244, 0.0782}, {0.0241, 0.1288, 0.8444}}};

// The published 4-digit inverse is not an exact inverse; derive it instead.
inline constexpr Mat3 inverse(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
      out[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
    }
  }
  return out;
}

inline constexpr Mat3 kLmsToRgb = inverse(kRgbToLms);

inline std::array<double, 3> from_rgb(double r, double g, double b) {
  const std::array<double, 3> v = {std::max((r + 1.0) * 0.5, kFloor), std::max((g + 1.0) * 0.5, kFloor),
                                   std::max((b + 1.0) * 0.5, kFloor)};
  std::array<double, 3> lms{};
  for (int i = 0; i < 3; ++i) {
    const auto& row = kRgbToLms[static_cast<std::size_t>(i)];
    lms[static_cast<std::size_t>(i)] = std::log10(std::max(row[0] * v[0] + row[1] * v[1] + row[2] * v[2], kFloor));
  }
  const auto [L, M, S] = lms;
  return {(L + M + S) / std::sqrt(3.0), (L + M - 2.0 * S) / std::sqrt(6.0), (L - M) / std::sqrt(2.0)};
}

inline std::array<double, 3> to_rgb(double l, double a, double b) {
  const double ls = l / std::sqrt(3.0), as = a / std::sqrt(6.0), bs = b / std::sqrt(2.0);
  const double L = std::pow(10.0, ls + as + bs);
  const double M = std::pow(10.0, ls + as - bs);
  const double S = std::pow(10.0, ls - 2.0 * as);
  std::array<double, 3> rgb{};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& row = kLmsToRgb[i];
    rgb[i] = 2.0 * (row[0] * L + row[1] * M + row[2] * S) - 1.0;
  }
  return rgb;
}

}  // namespace lab

inline ImageTensor rgb_to_lab(const ImageTensor& img) {
  if (img.channels() != 3) throw ShapeError("rgb_to_lab needs a 3-channel image");
  ImageTensor out(img.shape());
  for (std::size_t k = 0; k < img.height() * img.width(); ++k) {
    const auto v = lab::from_rgb(img.plane(0)[k], img.plane(1)[k], img.plane(2)[k]);
    for (std::size_t c = 0; c < 3; ++c) out.plane(c)[k] = v[c];
  }
  return out;
}

inline ImageTensor lab_to_rgb(const ImageTensor& img) {
  if (img.channels() != 3) throw ShapeError("lab_to_rgb needs a 3-channel image");
  ImageTensor out(img.shape());
  for (std::size_t k = 0; k < img.height() * img.width(); ++k) {
    const auto v = lab::to_rgb(img.plane(0)[k], img.plane(1)[k], img.plane(2)[k]);
    for (std::size_t c = 0; c < 3; ++c) out.plane(c)[k] = v[c];
  }
  return out;
}

}  // namespace ssdiff
