#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "ssdiff/color.hpp"
#include "ssdiff/guidance.hpp"
#include "ssdiff/io.hpp"
#include "ssdiff/regions.hpp"
#include "ssdiff/table.hpp"

namespace ssdiff {

/// |a AND b| / |a OR b|, with 1 for two empty masks.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("mask_iou: dimensions differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    inter += (a[k] && b[k]) ? 1 : 0;
    uni += (a[k] || b[k]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Contour = everything that is not background.
inline double contour_iou(const ParsingMap& a, const ParsingMap& b) {
  LabelSet face;
  for (int v = 1; v <= kMaxLabel; ++v) face.insert(v);
  return mask_iou(labels_to_mask(a, face), labels_to_mask(b, face));
}

inline const std::array<LabelSet, 4>& feature_groups() {
  static const std::array<LabelSet, 4> groups = {LabelSet{2, 3}, LabelSet{4, 5}, LabelSet{10}, LabelSet{11, 12, 13}};
  return groups;
}

/// Mean IOU over the brows / eyes / nose / mouth groups.
inline double feature_iou(const ParsingMap& a, const ParsingMap& b) {
  double acc = 0.0;
  for (const auto& g : feature_groups()) acc += mask_iou(labels_to_mask(a, g), labels_to_mask(b, g));
  return acc / static_cast<double>(feature_groups().size());
}

/// 64-bin HSV-saturation histogram normalized to unit mass (optionally over a region).
inline std::vector<double> saturation_histogram(const ImageTensor& img, const BinaryMask* region = nullptr) {
  const auto s = rgb_to_saturation(img);
  if (region && !region->matches(img.shape())) throw ShapeError("saturation_histogram: region dimensions differ");
  std::vector<double> hist(kSaturationBins, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (region && !(*region)[k]) continue;
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>(s[k] * kSaturationBins), kSaturationBins - 1);
    hist[bin] += 1.0;
    total += 1.0;
  }
  if (total > 0.0) {
    for (auto& v : hist) v /= total;
  }
  return hist;
}

/// Wasserstein-1 distance between two histograms on [0,1] with equal-width
/// bins; both are normalized to unit mass first.
inline double wasserstein1(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("wasserstein1: histogram sizes differ");
  const double ma = std::accumulate(a.begin(), a.end(), 0.0);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0);
  if (!(ma > 0.0) || !(mb > 0.0)) throw std::invalid_argument("empty histogram");
  double ca = 0.0, cb = 0.0, acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ca += a[k] / ma;
    cb += b[k] / mb;
    acc += std::abs(ca - cb);
  }
  return acc / static_cast<double>(a.size());
}

inline double saturation_distance(const ImageTensor& img, const std::vector<double>& ref_hist) {
  if (ref_hist.size() != kSaturationBins) throw std::invalid_argument("reference histogram must have 64 bins");
  return wasserstein1(saturation_histogram(img), ref_hist);
}

/// Population std of the unmasked edge magnitude over `region`; 0 when the region is empty.
inline double edge_variation(const ImageTensor& img, const BinaryMask& region) {
  if (!region.matches(img.shape())) throw ShapeError("edge_variation: region dimensions differ");
  const std::size_t n = region.count();
  if (n == 0) return 0.0;
  const auto d = edge_magnitude(img, BinaryMask(img.height(), img.width(), 1));
  double mean = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) mean += region[k] ? d[k] : 0.0;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (region[k]) var += (d[k] - mean) * (d[k] - mean);
  }
  return std::sqrt(var / static_cast<double>(n));
}

struct Fidelity {
  double mse = 0.0;
  double psnr = std::numeric_limits<double>::infinity();  // +inf when the images agree exactly
};

/// MSE over all channels of the region's pixels (or the whole image); PSNR
/// against a peak-to-peak range of 2.
inline Fidelity mse_psnr(const ImageTensor& a, const ImageTensor& b, const BinaryMask* region = nullptr) {
  a.require_same_shape(b, "mse_psnr");
  if (region && !region->matches(a.shape())) throw ShapeError("mse_psnr: region dimensions differ");
  const std::size_t n = a.height() * a.width();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c), pb = b.plane(c);
    for (std::size_t k = 0; k < n; ++k) {
      if (region && !(*region)[k]) continue;
      acc += (pa[k] - pb[k]) * (pa[k] - pb[k]);
      ++count;
    }
  }
  Fidelity f;
  if (count == 0) return f;
  f.mse = acc / static_cast<double>(count);
  f.psnr = f.mse > 0.0 ? 10.0 * std::log10(4.0 / f.mse) : std::numeric_limits<double>::infinity();
  return f;
}

struct MetricRow {
  std::optional<double> contour_iou;
  std::optional<double> feature_iou;
  std::optional<double> saturation_distance;
  std::optional<double> edge_variation;
  std::optional<double> mse;
  std::optional<double> psnr;
};

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {"contour_iou",    "feature_iou", "saturation_distance",
                                                "edge_variation", "mse",         "psnr"};
  return cols;
}

inline std::vector<std::string> metric_cells(const MetricRow& m) {
  return {Table::num(m.contour_iou),    Table::num(m.feature_iou), Table::num(m.saturation_distance),
          Table::num(m.edge_variation), Table::num(m.mse),         Table::num(m.psnr)};
}

}  // namespace ssdiff
