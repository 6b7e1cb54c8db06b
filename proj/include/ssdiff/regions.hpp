#pragma once

#include <array>
#include <cmath>
#include <set>
#include <string>
#include <string_view>

#include "ssdiff/tensor.hpp"

namespace ssdiff {

using LabelSet = std::set<int>;

// 19-class face-parsing coding (CelebAMask-HQ order).
inline constexpr std::array<std::string_view, kMaxLabel + 1> kLabelNames = {
    "background", "skin",     "l_brow", "r_brow", "l_eye", "r_eye", "eye_g", "l_ear", "r_ear", "ear_r",
    "nose",       "mouth",    "u_lip",  "l_lip",  "neck",  "neck_l", "cloth", "hair",  "hat",
};

/// Which parsing labels may be guided inside breakage, which count as skin
/// for coloring, and which are never guided. Labels in none of the sets are
/// left to the model's own completion.
struct LabelSets {
  LabelSet guide{0, 1, 17};
  LabelSet skin{1, 14};
  LabelSet exclude{2, 3, 4, 5, 10, 11, 12, 13};

  void validate() const {
    for (const auto* set : {&guide, &skin, &exclude}) {
      for (int v : *set) {
        if (v < 0 || v > kMaxLabel) throw ConfigError("labels: code " + std::to_string(v) + " outside [0,18]");
      }
    }
    for (int v : guide) {
      if (exclude.count(v)) throw ConfigError("labels: code " + std::to_string(v) + " is both guided and excluded");
    }
  }
};

/// Face selector S: keeps pixels where mask = 1, zeroes the rest.
inline ImageTensor select(const ImageTensor& img, const BinaryMask& mask) {
  if (!mask.matches(img.shape())) throw ShapeError("select: mask and image dimensions differ");
  ImageTensor out(img.shape());
  const std::size_t n = img.height() * img.width();
  for (std::size_t c = 0; c < img.channels(); ++c) {
    const auto src = img.plane(c);
    auto dst = out.plane(c);
    for (std::size_t k = 0; k < n; ++k) dst[k] = mask[k] ? src[k] : 0.0;
  }
  return out;
}

inline BinaryMask labels_to_mask(const ParsingMap& p, const LabelSet& labels) {
  BinaryMask out(p.height(), p.width());
  for (std::size_t k = 0; k < p.size(); ++k) out.set(k, labels.count(p[k]) > 0);
  return out;
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("mask dimensions differ");
  BinaryMask out(a.height(), a.width());
  for (std::size_t k = 0; k < a.size(); ++k) out.set(k, a[k] && b[k]);
  return out;
}

inline BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("mask dimensions differ");
  BinaryMask out(a.height(), a.width());
  for (std::size_t k = 0; k < a.size(); ++k) out.set(k, a[k] || b[k]);
  return out;
}

/// M_guide = M AND {pixels whose label is in the guide set}.
inline BinaryMask make_guide_mask(const BinaryMask& scratch, const ParsingMap& p, const LabelSets& sets) {
  if (scratch.height() != p.height() || scratch.width() != p.width()) {
    throw ShapeError("make_guide_mask: mask and parsing map dimensions differ");
  }
  return mask_and(scratch, labels_to_mask(p, sets.guide));
}

/// Dilation with a plus-shaped element of arm length `radius`, separable
/// into a horizontal and a vertical pass; both read the input mask.
inline BinaryMask extend_mask(const BinaryMask& m, std::size_t radius) {
  if (radius == 0) return m;
  const std::size_t h = m.height(), w = m.width();
  BinaryMask out = m;
  // Distance to the nearest set pixel along each row and column, two sweeps each.
  std::vector<std::size_t> dist(std::max(h, w));
  constexpr std::size_t kFar = static_cast<std::size_t>(-1) / 2;
  for (std::size_t i = 0; i < h; ++i) {
    std::size_t d = kFar;
    for (std::size_t j = 0; j < w; ++j) {
      d = m(i, j) ? 0 : (d == kFar ? kFar : d + 1);
      dist[j] = d;
    }
    d = kFar;
    for (std::size_t j = w; j-- > 0;) {
      d = m(i, j) ? 0 : (d == kFar ? kFar : d + 1);
      if (std::min(d, dist[j]) <= radius) out.set(i, j, true);
    }
  }
  for (std::size_t j = 0; j < w; ++j) {
    std::size_t d = kFar;
    for (std::size_t i = 0; i < h; ++i) {
      d = m(i, j) ? 0 : (d == kFar ? kFar : d + 1);
      dist[i] = d;
    }
    d = kFar;
    for (std::size_t i = h; i-- > 0;) {
      d = m(i, j) ? 0 : (d == kFar ? kFar : d + 1);
      if (std::min(d, dist[i]) <= radius) out.set(i, j, true);
    }
  }
  return out;
}

/// Default dilation radius: 3 px at 512 rows, scaled with image height.
inline std::size_t default_dilation_radius(std::size_t height) {
  return static_cast<std::size_t>(std::lround(3.0 * static_cast<double>(height) / 512.0));
}

/// Regions of the pseudo-label (and optional restored image) that supervise
/// the restoration pass. Each view carries the mask that says which of its
/// pixels are data.
struct RegionBundle {
  ImageTensor y_c;
  BinaryMask valid;  // 1 - M
  ImageTensor y_n;
  BinaryMask guide_ext;  // extend(M_guide)
  ImageTensor y_p_skin;
  BinaryMask skin;
};

inline RegionBundle build_regions(const ImageTensor& fidelity_source, const ImageTensor& pseudo_label,
                                  const BinaryMask& scratch, const ParsingMap& p, const LabelSets& sets,
                                  std::size_t radius) {
  fidelity_source.require_same_shape(pseudo_label, "build_regions");
  if (!scratch.matches(pseudo_label.shape()) || !p.matches(pseudo_label.shape())) {
    throw ShapeError("build_regions: mask/parsing dimensions do not match the image");
  }
  RegionBundle r;
  r.valid = scratch.complement();
  r.y_c = select(fidelity_source, r.valid);
  r.guide_ext = extend_mask(make_guide_mask(scratch, p, sets), radius);
  r.y_n = select(pseudo_label, r.guide_ext);
  r.skin = labels_to_mask(p, sets.skin);
  r.y_p_skin = select(pseudo_label, r.skin);
  return r;
}

}  // namespace ssdiff
