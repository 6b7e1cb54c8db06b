#include <gtest/gtest.h>

#include <cmath>

#include "ssdiff/denoiser.hpp"
#include "ssdiff/noise.hpp"
#include "ssdiff/schedule.hpp"
#include "test_util.hpp"

using namespace ssdiff;

TEST(Schedule, LinearProducts) {
  EXPECT_DOUBLE_EQ(make_linear_schedule(1, 0.5, 0.5).alpha_bar(1), 0.5);
  const auto s = make_linear_schedule(2, 0.1, 0.2);
  EXPECT_DOUBLE_EQ(s.beta(1), 0.1);
  EXPECT_DOUBLE_EQ(s.beta(2), 0.2);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, DefaultIsStrictlyDecreasingToNearZero) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  for (std::size_t t = 1; t <= 1000; ++t) EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  EXPECT_LT(s.alpha_bar(1000), 1e-4);
  const auto d = make_default_schedule(1000);
  EXPECT_EQ(d.beta(1), 1e-4);
  EXPECT_EQ(d.beta(1000), 0.02);
  // Shorter chains are rescaled so the terminal level is still pure noise.
  EXPECT_LT(make_default_schedule(100).alpha_bar(100), 1e-4);
}

TEST(Schedule, RejectsInvalidParameters) {
  EXPECT_THROW(make_linear_schedule(0, 1e-4, 0.02), ConfigError);
  EXPECT_THROW(make_linear_schedule(10, 0.0, 0.02), ConfigError);
  EXPECT_THROW(make_linear_schedule(10, 0.03, 0.02), ConfigError);
  EXPECT_THROW(make_linear_schedule(10, 1e-4, 1.0), ConfigError);
  EXPECT_THROW(NoiseSchedule({0.5, 1.5}), ConfigError);
  EXPECT_THROW(make_default_schedule(10).posterior_variance(0), std::out_of_range);
  EXPECT_THROW(make_default_schedule(10).posterior_variance(11), std::out_of_range);
}

TEST(QSample, EndpointAndArithmetic) {
  const NoiseSchedule s({0.75});  // alpha_bar_1 = 0.25
  std::mt19937_64 rng(1);
  const auto x0 = testutil::random_image({1, 3, 3}, rng);
  const auto eps = testutil::random_image({1, 3, 3}, rng);
  EXPECT_EQ(q_sample(x0, 0, eps, s), x0);

  const auto xt = q_sample(ImageTensor(1, 2, 2, 1.0), 1, ImageTensor(1, 2, 2), s);
  for (double v : xt.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(QSample, MonteCarloVariance) {
  const NoiseSchedule s({0.5});  // alpha_bar_1 = 0.5
  NoiseStream rng(7);
  const ImageTensor x0(1, 1, 1, 0.3);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double v = q_sample(x0, 1, rng.standard_normal(x0.shape()), s)[0];
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  EXPECT_NEAR(sum2 / n - mean * mean, 0.5, 0.01);
  EXPECT_NEAR(mean, std::sqrt(0.5) * 0.3, 0.01);
}

TEST(PredictX0, InverseOfQSample) {
  const NoiseSchedule s({0.75});
  const auto x0 = predict_x0(ImageTensor(1, 2, 2, 0.5), ImageTensor(1, 2, 2), 1, s);
  for (double v : x0.data()) EXPECT_DOUBLE_EQ(v, 1.0);

  const auto sched = make_default_schedule(1000);
  std::mt19937_64 rng(2);
  for (std::size_t t : {0, 1, 37, 500, 999, 1000}) {
    const auto clean = testutil::random_image({3, 4, 4}, rng);
    const auto eps = testutil::random_image({3, 4, 4}, rng, -3.0, 3.0);
    const auto back = predict_x0(q_sample(clean, t, eps, sched), eps, t, sched);
    for (std::size_t k = 0; k < clean.size(); ++k) EXPECT_NEAR(back[k], clean[k], 1e-6) << "t=" << t;
  }
  const auto xt = testutil::random_image({1, 2, 2}, rng);
  EXPECT_EQ(predict_x0(xt, testutil::random_image({1, 2, 2}, rng), 0, sched), xt);
}

TEST(Posterior, VarianceAndMean) {
  const auto s = make_linear_schedule(2, 0.1, 0.2);
  EXPECT_EQ(s.posterior_variance(1), 0.0);
  EXPECT_NEAR(s.posterior_variance(2), 0.2 * 0.1 / 0.28, 1e-15);
  EXPECT_NEAR(s.posterior_variance(2), 0.071429, 1e-6);

  std::mt19937_64 rng(3);
  const auto xt = testutil::random_image({1, 3, 3}, rng);
  const auto m = posterior(xt, ImageTensor(1, 3, 3), 2, s);
  for (std::size_t k = 0; k < xt.size(); ++k) EXPECT_DOUBLE_EQ(m.mean[k], xt[k] / std::sqrt(0.8));
  EXPECT_EQ(posterior(xt, xt, 1, s).variance_scale, 0.0);
}

TEST(GuidedTransition, ScaleAndDeterminism) {
  std::mt19937_64 rng(4);
  const auto mean = testutil::random_image({1, 2, 2}, rng);
  const auto noise = testutil::random_image({1, 2, 2}, rng);
  const auto grad = testutil::random_image({1, 2, 2}, rng);

  const PosteriorMoments pm{mean, 0.04};
  const auto unguided = guided_transition(pm, ImageTensor(1, 2, 2), 0.0, noise);
  EXPECT_EQ(guided_transition(pm, grad, 0.0, noise), unguided);
  for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_DOUBLE_EQ(unguided[k], mean[k] + 0.2 * noise[k]);

  const PosteriorMoments last{mean, 0.0};
  EXPECT_EQ(guided_transition(last, grad, 3.5e-3, noise), mean);

  const PosteriorMoments small{mean, 0.01};
  const auto shifted = guided_transition(small, ImageTensor(1, 2, 2, 1.0), 3.5e-3, ImageTensor(1, 2, 2));
  for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_NEAR(shifted[k], mean[k] - 3.5e-5, 1e-15);

  EXPECT_THROW(guided_transition({mean, -1.0}, grad, 1.0, noise), std::invalid_argument);
  EXPECT_THROW(guided_transition(pm, ImageTensor(1, 3, 3), 1.0, noise), ShapeError);
}

TEST(ForwardStep, MatchesKernel) {
  const auto s = make_linear_schedule(2, 0.1, 0.2);
  const ImageTensor x(1, 1, 1, 2.0), e(1, 1, 1, 1.0);
  EXPECT_DOUBLE_EQ(forward_step(x, 2, e, s)[0], std::sqrt(0.8) * 2.0 + std::sqrt(0.2));
}

TEST(NoiseStream, SeedsAndStreamsAreIndependent) {
  NoiseStream a(5, 1), b(5, 1), c(5, 2), d(6, 1);
  const auto va = a.standard_normal({1, 4, 4});
  EXPECT_EQ(va, b.standard_normal({1, 4, 4}));
  EXPECT_FALSE(va == c.standard_normal({1, 4, 4}));
  EXPECT_FALSE(va == d.standard_normal({1, 4, 4}));
}

// ---------------------------------------------------------------------------

namespace {

DiagonalGaussianModel constant_model(const Shape& s, double mean, double var) {
  return {ImageTensor(s, mean), ImageTensor(s, var)};
}

ImageTensor x0_of(const ImageTensor& xt, const ImageTensor& eps, std::size_t t, const NoiseSchedule& s) {
  return predict_x0(xt, eps, t, s);
}

}  // namespace

TEST(GaussianDenoiser, StandardNormalPrior) {
  const auto sched = make_default_schedule(1000);
  std::mt19937_64 rng(6);
  const auto m = constant_model({3, 4, 4}, 0.0, 1.0);
  for (std::size_t t : {1, 250, 1000}) {
    const auto xt = testutil::random_image({3, 4, 4}, rng, -2.0, 2.0);
    const auto x0 = x0_of(xt, gaussian_predict_eps(m, xt, t, sched), t, sched);
    const double sab = std::sqrt(sched.alpha_bar(t));
    for (std::size_t k = 0; k < xt.size(); ++k) EXPECT_NEAR(x0[k], sab * xt[k], 1e-9);
  }
}

TEST(GaussianDenoiser, MonteCarloConditionalMean) {
  // Draw (x0, xt) pairs, bin on xt, and compare the in-bin mean of x0.
  const NoiseSchedule s({0.6});
  const double mu = 0.3, var = 0.5;
  const auto m = constant_model({1, 1, 1}, mu, var);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01(0.0, 1.0);
  double sum = 0.0;
  int count = 0;
  const double sab = std::sqrt(0.4), snoise = std::sqrt(0.6);
  for (int k = 0; k < 1000000; ++k) {
    const double x0 = mu + std::sqrt(var) * n01(rng);
    const double xt = sab * x0 + snoise * n01(rng);
    if (std::abs(xt - 0.5) < 0.01) {
      sum += x0;
      ++count;
    }
  }
  const ImageTensor xt(1, 1, 1, 0.5);
  const double analytic = x0_of(xt, gaussian_predict_eps(m, xt, 1, s), 1, s)[0];
  ASSERT_GT(count, 1000);
  EXPECT_NEAR(sum / count, analytic, 0.03);
}

TEST(GaussianDenoiser, PriorDominatesAtPureNoise) {
  const NoiseSchedule s({0.999999});
  std::mt19937_64 rng(9);
  const auto mean = testutil::random_image({1, 3, 3}, rng, -0.5, 0.5);
  const DiagonalGaussianModel m{mean, ImageTensor(mean.shape(), 0.7)};
  const auto xt = testutil::random_image({1, 3, 3}, rng);
  const auto x0 = x0_of(xt, gaussian_predict_eps(m, xt, 1, s), 1, s);
  for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_NEAR(x0[k], mean[k], 1e-3);
}

TEST(GaussianDenoiser, PointMassPrior) {
  const auto sched = make_default_schedule(1000);
  std::mt19937_64 rng(10);
  const auto mean = testutil::random_image({3, 2, 2}, rng);
  const DiagonalGaussianModel m{mean, ImageTensor(mean.shape(), 0.0)};
  for (std::size_t t : {1, 500, 1000}) {
    const auto xt = testutil::random_image({3, 2, 2}, rng, -3.0, 3.0);
    const auto x0 = x0_of(xt, gaussian_predict_eps(m, xt, t, sched), t, sched);
    for (std::size_t k = 0; k < mean.size(); ++k) EXPECT_NEAR(x0[k], mean[k], 1e-9);
  }
}

TEST(GaussianDenoiser, KeystoneIdentity) {
  const auto sched = make_default_schedule(1000);
  std::mt19937_64 rng(11);
  for (int n = 0; n < 20; ++n) {
    const DiagonalGaussianModel m{testutil::random_image({3, 4, 4}, rng), testutil::random_image({3, 4, 4}, rng, 0.0, 2.0)};
    const std::size_t t = 1 + static_cast<std::size_t>(rng() % 1000);
    const auto xt = testutil::random_image({3, 4, 4}, rng, -2.0, 2.0);
    const auto x0 = x0_of(xt, gaussian_predict_eps(m, xt, t, sched), t, sched);
    const double ab = sched.alpha_bar(t);
    for (std::size_t k = 0; k < xt.size(); ++k) {
      const double v = m.var[k];
      const double expect = m.mean[k] + std::sqrt(ab) * v / (ab * v + 1 - ab) * (xt[k] - std::sqrt(ab) * m.mean[k]);
      EXPECT_NEAR(x0[k], expect, 1e-9 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST(GaussianDenoiser, ZeroEpsAtCleanEndpoint) {
  const auto sched = make_default_schedule(10);
  const auto m = constant_model({1, 2, 2}, 0.2, 1.0);
  EXPECT_EQ(gaussian_predict_eps(m, ImageTensor(1, 2, 2, 0.7), 0, sched), ImageTensor(1, 2, 2));
}

TEST(GaussianDenoiser, ValidatesModel) {
  const auto sched = make_default_schedule(10);
  EXPECT_THROW(GaussianDenoiser(constant_model({1, 2, 2}, 0.0, -1.0), sched), ConfigError);
  EXPECT_THROW(GaussianDenoiser(DiagonalGaussianModel{ImageTensor(1, 2, 2), ImageTensor(1, 3, 3)}, sched), ShapeError);
  GaussianDenoiser den(constant_model({1, 2, 2}, 0.0, 1.0), sched);
  EXPECT_THROW(den.predict_eps(ImageTensor(3, 2, 2), 5), ShapeError);
}

TEST(GmmDenoiser, SingleComponentIsBitwiseGaussian) {
  const auto sched = make_default_schedule(1000);
  std::mt19937_64 rng(12);
  const DiagonalGaussianModel m{testutil::random_image({3, 4, 4}, rng), testutil::random_image({3, 4, 4}, rng, 0.1, 1.0)};
  const GaussianMixtureModel g{{{1.0, m}}};
  for (std::size_t t : {1, 10, 400, 1000}) {
    const auto xt = testutil::random_image({3, 4, 4}, rng, -2.0, 2.0);
    EXPECT_EQ(gmm_predict_eps(g, xt, t, sched), gaussian_predict_eps(m, xt, t, sched));
  }
}

TEST(GmmDenoiser, SymmetricComponentsAtOrigin) {
  const auto sched = make_default_schedule(1000);
  const GaussianMixtureModel g{{{0.5, constant_model({1, 2, 2}, 0.6, 0.2)}, {0.5, constant_model({1, 2, 2}, -0.6, 0.2)}}};
  const ImageTensor xt(1, 2, 2);
  const auto r = gmm_responsibilities(g, xt, sched.alpha_bar(300));
  EXPECT_NEAR(r[0], 0.5, 1e-15);
  EXPECT_NEAR(r[1], 0.5, 1e-15);
  const auto x0 = x0_of(xt, gmm_predict_eps(g, xt, 300, sched), 300, sched);
  for (double v : x0.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(GmmDenoiser, FarInOneBasin) {
  const auto sched = make_default_schedule(1000);
  const auto a = constant_model({1, 2, 2}, 0.8, 0.05), b = constant_model({1, 2, 2}, -0.8, 0.05);
  const GaussianMixtureModel g{{{0.3, a}, {0.7, b}}};
  const std::size_t t = 50;
  const double ab = sched.alpha_bar(t);
  const ImageTensor xt(1, 2, 2, std::sqrt(ab) * 0.8);
  // Responsibility ratio by direct likelihood evaluation.
  const double la = detail::gaussian_log_likelihood(a, xt, ab) + std::log(0.3);
  const double lb = detail::gaussian_log_likelihood(b, xt, ab) + std::log(0.7);
  ASSERT_LT(lb - la, -30.0);
  const auto x0 = x0_of(xt, gmm_predict_eps(g, xt, t, sched), t, sched);
  const auto ea = detail::gaussian_posterior_mean(a, xt, ab);
  for (std::size_t k = 0; k < x0.size(); ++k) EXPECT_NEAR(x0[k], ea[k], 1e-6);
}

TEST(GmmDenoiser, DegradesContinuouslyToOneComponent) {
  const auto sched = make_default_schedule(1000);
  std::mt19937_64 rng(13);
  const DiagonalGaussianModel a{testutil::random_image({1, 3, 3}, rng), ImageTensor(1, 3, 3, 0.3)};
  const DiagonalGaussianModel b{testutil::random_image({1, 3, 3}, rng), ImageTensor(1, 3, 3, 0.3)};
  const auto xt = testutil::random_image({1, 3, 3}, rng);
  const auto target = gaussian_predict_eps(a, xt, 600, sched);
  double prev = 1e300;
  for (double eps : {1e-1, 1e-3, 1e-6, 1e-9}) {
    const GaussianMixtureModel g{{{1.0 - eps, a}, {eps, b}}};
    const auto out = gmm_predict_eps(g, xt, 600, sched);
    double err = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) err = std::max(err, std::abs(out[k] - target[k]));
    EXPECT_LE(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-8);
}

TEST(GmmDenoiser, ValidatesWeights) {
  const auto sched = make_default_schedule(10);
  const auto m = constant_model({1, 1, 1}, 0.0, 1.0);
  EXPECT_THROW(GmmDenoiser(GaussianMixtureModel{}, sched), ConfigError);
  EXPECT_THROW(GmmDenoiser(GaussianMixtureModel{{{0.5, m}, {0.4, m}}}, sched), ConfigError);
  EXPECT_THROW(GmmDenoiser(GaussianMixtureModel{{{1.5, m}, {-0.5, m}}}, sched), ConfigError);
  EXPECT_NO_THROW(GmmDenoiser(GaussianMixtureModel{{{0.25, m}, {0.75, m}}}, sched));
}
