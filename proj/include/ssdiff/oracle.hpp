#pragma once

// Brute-force reference implementations. They restate each definition
// pointwise and share no code with the production operators, so agreement
// between the two is meaningful.

#include <cmath>
#include <functional>
#include <vector>

#include "ssdiff/tensor.hpp"

namespace ssdiff::oracle {

/// Edge magnitude straight from the pointwise definition, one channel at a
/// time, then averaged.
inline std::vector<double> edge_magnitude(const ImageTensor& y, const BinaryMask& m) {
  const long h = static_cast<long>(y.height()), w = static_cast<long>(y.width());
  const auto val = [&](std::size_t c, long i, long j) { return y.at(c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)); };
  const auto msk = [&](long i, long j) -> double {
    if (i < 0 || j < 0 || i >= h || j >= w) return 0.0;
    return m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  };
  std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
  for (std::size_t c = 0; c < y.channels(); ++c) {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        double right = 0.0, down = 0.0;
        if (msk(i, j) * msk(i, j + 1) != 0.0) right = std::fabs(val(c, i, j) - val(c, i, j + 1));
        if (msk(i, j) * msk(i + 1, j) != 0.0) down = std::fabs(val(c, i, j) - val(c, i + 1, j));
        out[static_cast<std::size_t>(i * w + j)] += (right + down) / static_cast<double>(y.channels());
      }
    }
  }
  return out;
}

/// Cross-shaped dilation by scanning the 4r + 1 neighbourhood of every pixel.
inline BinaryMask extend_mask(const BinaryMask& m, std::size_t radius) {
  const long h = static_cast<long>(m.height()), w = static_cast<long>(m.width()), r = static_cast<long>(radius);
  BinaryMask out(m.height(), m.width());
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      bool hit = false;
      for (long k = -r; k <= r && !hit; ++k) {
        if (i + k >= 0 && i + k < h && m(static_cast<std::size_t>(i + k), static_cast<std::size_t>(j))) hit = true;
        if (j + k >= 0 && j + k < w && m(static_cast<std::size_t>(i), static_cast<std::size_t>(j + k))) hit = true;
      }
      out.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), hit);
    }
  }
  return out;
}

/// Central finite differences of a scalar function of an image.
inline ImageTensor central_difference(const std::function<double(const ImageTensor&)>& f, const ImageTensor& x,
                                      double h = 1e-5) {
  ImageTensor grad(x.shape());
  ImageTensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace ssdiff::oracle
