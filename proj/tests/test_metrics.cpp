#include <gtest/gtest.h>

#include "ssdiff/metrics.hpp"
#include "test_util.hpp"

using namespace ssdiff;

TEST(MaskIou, ReferenceValues) {
  std::mt19937_64 rng(1);
  auto a = testutil::random_mask(5, 5, 0.5, rng);
  a.set(0, 0, true);
  EXPECT_EQ(mask_iou(a, a), 1.0);
  EXPECT_EQ(mask_iou(a, a.complement()), 0.0);
  EXPECT_EQ(mask_iou(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);

  const BinaryMask top(2, 2, std::vector<std::uint8_t>{1, 1, 0, 0});
  const BinaryMask left(2, 2, std::vector<std::uint8_t>{1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(mask_iou(top, left), 1.0 / 3.0);
  EXPECT_THROW(mask_iou(top, BinaryMask(3, 2)), ShapeError);
}

TEST(MaskIou, SymmetricAndOneOnlyWhenIdentical) {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 50; ++n) {
    auto a = testutil::random_mask(6, 6, 0.4, rng), b = testutil::random_mask(6, 6, 0.4, rng);
    a.set(0, 0, true);
    EXPECT_EQ(mask_iou(a, b), mask_iou(b, a));
    EXPECT_EQ(mask_iou(a, b) == 1.0, a == b);
  }
}

TEST(ParsingIou, ContourAndFeatures) {
  ParsingMap a(4, 4, 0), b(4, 4, 0);
  for (std::size_t i = 1; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      a.set(i, j, 1);
      b.set(i, j, 1);
    }
  }
  a.set(1, 1, 4);
  b.set(1, 2, 4);
  EXPECT_EQ(contour_iou(a, b), 1.0);
  // Eyes disjoint (0), brows/nose/mouth absent in both (1 each).
  EXPECT_DOUBLE_EQ(feature_iou(a, b), 0.75);
  EXPECT_EQ(feature_iou(a, a), 1.0);
}

TEST(Wasserstein, PointMassesAndSymmetry) {
  std::vector<double> a(kSaturationBins, 0.0), b(kSaturationBins, 0.0);
  a[0] = 1.0;
  b[63] = 1.0;
  EXPECT_DOUBLE_EQ(wasserstein1(a, b), 0.984375);
  EXPECT_DOUBLE_EQ(wasserstein1(b, a), 0.984375);
  EXPECT_EQ(wasserstein1(a, a), 0.0);
  std::vector<double> scaled = a;
  scaled[0] = 5.0;  // normalized before comparison
  EXPECT_EQ(wasserstein1(scaled, a), 0.0);
  EXPECT_THROW(wasserstein1(std::vector<double>(kSaturationBins, 0.0), a), std::invalid_argument);
}

TEST(Wasserstein, TriangleInequality) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 100; ++n) {
    std::vector<double> a(kSaturationBins), b(kSaturationBins), c(kSaturationBins);
    for (std::size_t k = 0; k < kSaturationBins; ++k) {
      a[k] = u(rng);
      b[k] = u(rng);
      c[k] = u(rng);
    }
    EXPECT_LE(wasserstein1(a, c), wasserstein1(a, b) + wasserstein1(b, c) + 1e-12);
  }
}

TEST(SaturationDistance, SelfHistogramIsZero) {
  std::mt19937_64 rng(4);
  const auto img = testutil::random_image({3, 8, 8}, rng);
  EXPECT_EQ(saturation_distance(img, saturation_histogram(img)), 0.0);
  EXPECT_THROW(saturation_distance(img, std::vector<double>(10, 1.0)), std::invalid_argument);
  const auto h = saturation_histogram(img);
  double mass = 0.0;
  for (double v : h) mass += v;
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(EdgeVariation, ReferenceValues) {
  EXPECT_EQ(edge_variation(ImageTensor(3, 5, 5, 0.4), BinaryMask(5, 5, 1)), 0.0);
  std::mt19937_64 rng(5);
  const auto img = testutil::random_image({3, 5, 5}, rng);
  EXPECT_EQ(edge_variation(img, BinaryMask(5, 5, 0)), 0.0);
  const ImageTensor y(Shape{1, 2, 2}, std::vector<double>{0, 1, 0, 1});
  EXPECT_DOUBLE_EQ(edge_variation(y, BinaryMask(2, 2, 1)), 0.5);
  EXPECT_THROW(edge_variation(img, BinaryMask(4, 5, 1)), ShapeError);
}

TEST(EdgeVariation, TranslationInvariant) {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 20; ++n) {
    const auto img = testutil::random_image({3, 8, 8}, rng);
    const auto region = testutil::random_mask(8, 8, 0.5, rng);
    auto shifted = img;
    for (auto& v : shifted.data()) v += 0.37;
    EXPECT_NEAR(edge_variation(shifted, region), edge_variation(img, region), 1e-12);
  }
}

TEST(MsePsnr, ReferenceValues) {
  std::mt19937_64 rng(7);
  const auto a = testutil::random_image({3, 4, 4}, rng);
  const auto same = mse_psnr(a, a);
  EXPECT_EQ(same.mse, 0.0);
  EXPECT_TRUE(std::isinf(same.psnr));

  auto b = a;
  for (auto& v : b.data()) v += 0.2;
  const auto off = mse_psnr(a, b);
  EXPECT_NEAR(off.mse, 0.04, 1e-12);
  EXPECT_NEAR(off.psnr, 20.0, 1e-9);
  EXPECT_THROW(mse_psnr(a, ImageTensor(1, 4, 4)), ShapeError);
}

TEST(MsePsnr, RegionMatchesLoop) {
  std::mt19937_64 rng(8);
  for (int n = 0; n < 20; ++n) {
    const auto a = testutil::random_image({3, 6, 6}, rng), b = testutil::random_image({3, 6, 6}, rng);
    auto region = testutil::random_mask(6, 6, 0.5, rng);
    region.set(0, 0, true);
    double acc = 0.0;
    int count = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
          if (!region(i, j)) continue;
          acc += (a.at(c, i, j) - b.at(c, i, j)) * (a.at(c, i, j) - b.at(c, i, j));
          ++count;
        }
      }
    }
    EXPECT_NEAR(mse_psnr(a, b, &region).mse, acc / count, 1e-14);
  }
}

TEST(MetricRow, CellsFollowColumns) {
  MetricRow m;
  m.mse = 0.5;
  const auto cells = metric_cells(m);
  ASSERT_EQ(cells.size(), metric_columns().size());
  EXPECT_EQ(cells[4], "0.5");
  EXPECT_EQ(cells[0], "nan");
  EXPECT_EQ(metric_columns(),
            (std::vector<std::string>{"contour_iou", "feature_iou", "saturation_distance", "edge_variation", "mse", "psnr"}));
}
