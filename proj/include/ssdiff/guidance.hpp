#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string_view>

#include "ssdiff/color.hpp"
#include "ssdiff/regions.hpp"
#include "ssdiff/tensor.hpp"

namespace ssdiff {

/// A scalar loss together with its gradient w.r.t. the image argument.
struct LossTerm {
  double value = 0.0;
  ImageTensor grad;
};

namespace detail {

inline void require_mask(const ImageTensor& img, const BinaryMask& m, const char* where) {
  if (!m.matches(img.shape())) throw ShapeError(std::string(where) + ": mask and image dimensions differ");
}

inline double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// L1 = sum (1 - M) (y_c - x)^2 over all channels; gradient 2 (1 - M) (x - y_c).
inline LossTerm loss_fidelity(const ImageTensor& x_hat, const ImageTensor& y_c, const BinaryMask& scratch) {
  x_hat.require_same_shape(y_c, "loss_fidelity");
  detail::require_mask(x_hat, scratch, "loss_fidelity");
  LossTerm out{0.0, ImageTensor(x_hat.shape())};
  const std::size_t n = x_hat.height() * x_hat.width();
  for (std::size_t c = 0; c < x_hat.channels(); ++c) {
    const auto x = x_hat.plane(c), y = y_c.plane(c);
    auto g = out.grad.plane(c);
    for (std::size_t k = 0; k < n; ++k) {
      if (scratch[k]) continue;
      const double d = x[k] - y[k];
      out.value += d * d;
      g[k] = 2.0 * d;
    }
  }
  return out;
}

/// Masked edge magnitude: per pixel, the channel-averaged absolute forward
/// differences to the right and lower neighbours, each gated by the mask on
/// both ends. Neighbours past the border contribute nothing.
inline ImageTensor edge_magnitude(const ImageTensor& y, const BinaryMask& m) {
  detail::require_mask(y, m, "edge_magnitude");
  const std::size_t h = y.height(), w = y.width();
  const double inv_c = 1.0 / static_cast<double>(y.channels());
  ImageTensor out(1, h, w);
  for (std::size_t c = 0; c < y.channels(); ++c) {
    const auto p = y.plane(c);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (!m(i, j)) continue;
        const std::size_t k = i * w + j;
        double acc = 0.0;
        if (j + 1 < w && m(i, j + 1)) acc += std::abs(p[k] - p[k + 1]);
        if (i + 1 < h && m(i + 1, j)) acc += std::abs(p[k] - p[k + w]);
        out[k] += acc * inv_c;
      }
    }
  }
  return out;
}

/// L2 = || D(y_n, M_ext) - D(x, M_ext) ||^2 with its subgradient (sign(0) = 0).
inline LossTerm loss_smoothness(const ImageTensor& x_hat, const ImageTensor& y_n, const BinaryMask& ext) {
  x_hat.require_same_shape(y_n, "loss_smoothness");
  detail::require_mask(x_hat, ext, "loss_smoothness");
  const auto dx = edge_magnitude(x_hat, ext);
  const auto dy = edge_magnitude(y_n, ext);
  LossTerm out{0.0, ImageTensor(x_hat.shape())};

  const std::size_t h = x_hat.height(), w = x_hat.width();
  const double inv_c = 1.0 / static_cast<double>(x_hat.channels());
  ImageTensor residual(1, h, w);  // dL/dD(x) at each pixel
  for (std::size_t k = 0; k < h * w; ++k) {
    const double r = dx[k] - dy[k];
    out.value += r * r;
    residual[k] = 2.0 * r;
  }
  for (std::size_t c = 0; c < x_hat.channels(); ++c) {
    const auto p = x_hat.plane(c);
    auto g = out.grad.plane(c);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (!ext(i, j)) continue;
        const std::size_t k = i * w + j;
        const double r = residual[k] * inv_c;
        if (j + 1 < w && ext(i, j + 1)) {
          const double s = r * detail::sign(p[k] - p[k + 1]);
          g[k] += s;
          g[k + 1] -= s;
        }
        if (i + 1 < h && ext(i + 1, j)) {
          const double s = r * detail::sign(p[k] - p[k + w]);
          g[k] += s;
          g[k + w] -= s;
        }
      }
    }
  }
  return out;
}

enum class ColorSpace { rgb, lab };

inline std::string_view to_string(ColorSpace s) { return s == ColorSpace::rgb ? "rgb" : "lab"; }

struct TransferOptions {
  ColorSpace space = ColorSpace::rgb;
  bool clamp = true;
};

/// Per-channel moment matching: inside mask_c, each channel becomes
/// (x - mu_c) * sigma_r / sigma_c + mu_r with moments taken over the
/// respective masks (population std). sigma_c = 0 sends the region to mu_r.
/// Stands in for a learned style-transfer network.
inline ImageTensor color_transfer(const ImageTensor& content, const ImageTensor& reference, const BinaryMask& mask_c,
                                  const BinaryMask& mask_r, TransferOptions opts = {}) {
  if (content.channels() != reference.channels()) throw ShapeError("color_transfer: channel count mismatch");
  if (opts.space == ColorSpace::lab && content.channels() != 3) {
    throw ShapeError("color_transfer: lab mode needs 3-channel images");
  }
  detail::require_mask(content, mask_c, "color_transfer(content)");
  detail::require_mask(reference, mask_r, "color_transfer(reference)");
  const std::size_t nc = mask_c.count(), nr = mask_r.count();
  if (nc == 0 || nr == 0) return content;

  const ImageTensor src = opts.space == ColorSpace::lab ? rgb_to_lab(content) : content;
  const ImageTensor ref = opts.space == ColorSpace::lab ? rgb_to_lab(reference) : reference;
  ImageTensor out = src;

  const auto moments = [](std::span<const double> v, const BinaryMask& m, std::size_t n) {
    double mean = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) mean += m[k] ? v[k] : 0.0;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (m[k]) var += (v[k] - mean) * (v[k] - mean);
    }
    return std::pair{mean, std::sqrt(var / static_cast<double>(n))};
  };

  for (std::size_t c = 0; c < src.channels(); ++c) {
    const auto [mu_c, sd_c] = moments(src.plane(c), mask_c, nc);
    const auto [mu_r, sd_r] = moments(ref.plane(c), mask_r, nr);
    // Summation leaves a constant region with a tiny nonzero spread; treat
    // anything at rounding level as flat.
    const bool flat = sd_c <= 1e-12 * std::max(1.0, std::abs(mu_c));
    auto o = out.plane(c);
    for (std::size_t k = 0; k < o.size(); ++k) {
      if (!mask_c[k]) continue;
      o[k] = flat ? mu_r : (o[k] - mu_c) * (sd_r / sd_c) + mu_r;
    }
  }

  if (opts.space == ColorSpace::lab) {
    // Convert back only the transferred pixels; the rest keep their exact RGB values.
    const auto rgb = lab_to_rgb(out);
    out = content;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < mask_c.size(); ++k) {
        if (mask_c[k]) out.plane(c)[k] = rgb.plane(c)[k];
      }
    }
  }
  if (opts.clamp) {
    for (std::size_t c = 0; c < out.channels(); ++c) {
      auto o = out.plane(c);
      for (std::size_t k = 0; k < o.size(); ++k) {
        if (mask_c[k]) o[k] = std::clamp(o[k], -1.0, 1.0);
      }
    }
  }
  return out;
}

/// L3 = sum skin (y_s - x)^2; y_s is a constant target.
inline LossTerm loss_color(const ImageTensor& x_hat_s, const ImageTensor& y_s, const BinaryMask& skin) {
  x_hat_s.require_same_shape(y_s, "loss_color");
  detail::require_mask(x_hat_s, skin, "loss_color");
  LossTerm out{0.0, ImageTensor(x_hat_s.shape())};
  const std::size_t n = x_hat_s.height() * x_hat_s.width();
  for (std::size_t c = 0; c < x_hat_s.channels(); ++c) {
    const auto x = x_hat_s.plane(c), y = y_s.plane(c);
    auto g = out.grad.plane(c);
    for (std::size_t k = 0; k < n; ++k) {
      if (!skin[k]) continue;
      const double d = x[k] - y[k];
      out.value += d * d;
      g[k] = 2.0 * d;
    }
  }
  return out;
}

enum class Stage { restoration, coloring };

inline std::string_view to_string(Stage s) { return s == Stage::restoration ? "I" : "II"; }

/// Stage I for t > T1, stage II (color guidance on) for t <= T1.
inline Stage stage_for(std::size_t t, std::size_t t1) { return t > t1 ? Stage::restoration : Stage::coloring; }

struct LossReport {
  Stage stage = Stage::restoration;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;
  bool l3_active = false;
  ImageTensor grad;  // gradient of the active sum
  ImageTensor grad_l1, grad_l2, grad_l3;
  double norm_l1 = 0.0, norm_l2 = 0.0, norm_l3 = 0.0, norm_total = 0.0;
};

/// Combines the per-term losses for a stage. In stage I any L3 input is
/// ignored and reported as an exact zero.
inline LossReport assemble_gradient(Stage stage, LossTerm l1, LossTerm l2, std::optional<LossTerm> l3) {
  l1.grad.require_same_shape(l2.grad, "assemble_gradient");
  LossReport r;
  r.stage = stage;
  r.l1 = l1.value;
  r.l2 = l2.value;
  r.grad = l1.grad + l2.grad;
  r.l3_active = stage == Stage::coloring && l3.has_value();
  if (r.l3_active) {
    l1.grad.require_same_shape(l3->grad, "assemble_gradient");
    r.l3 = l3->value;
    r.grad += l3->grad;
    r.grad_l3 = std::move(l3->grad);
  } else {
    r.grad_l3 = ImageTensor(l1.grad.shape());
  }
  r.grad_l1 = std::move(l1.grad);
  r.grad_l2 = std::move(l2.grad);
  r.norm_l1 = l2_norm(r.grad_l1);
  r.norm_l2 = l2_norm(r.grad_l2);
  r.norm_l3 = l2_norm(r.grad_l3);
  r.norm_total = l2_norm(r.grad);
  return r;
}

}  // namespace ssdiff
