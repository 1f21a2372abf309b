#include <gtest/gtest.h>

#include <cmath>

#include "mcir/simulate.hpp"
#include "test_support.hpp"

using namespace mcir;

TEST(Phantom, BoundedAndDeterministic) {
  for (auto kind : {PhantomKind::nested_shells, PhantomKind::thorax}) {
    const Image a = make_phantom(kind, 64, 64), b = make_phantom(kind, 64, 64);
    EXPECT_EQ(a, b);
    double peak = 0.0;
    for (double v : a.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      peak = std::max(peak, v);
    }
    EXPECT_GT(peak, 0.5);
    // Background corners are empty.
    EXPECT_EQ(a(0, 0), 0.0);
    EXPECT_EQ(a(63, 63), 0.0);
  }
  EXPECT_THROW(make_phantom(PhantomKind::thorax, 8, 64), std::invalid_argument);
}

TEST(Phantom, LungsDarkerThanTissue) {
  for (std::size_t n : {64u, 100u}) {
    const Image x = make_phantom(PhantomKind::thorax, n, n);
    const auto [lung, tissue] = thorax_masks(n, n);
    double lsum = 0, tsum = 0;
    std::size_t ln = 0, tn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (lung[i]) lsum += x[i], ++ln;
      if (tissue[i]) tsum += x[i], ++tn;
    }
    ASSERT_GT(ln, 0u);
    ASSERT_GT(tn, 0u);
    EXPECT_LT(lsum / ln, 0.5 * (tsum / tn));
  }
}

TEST(Phantom, KindNames) {
  EXPECT_EQ(phantom_kind_from_string("walnut"), PhantomKind::nested_shells);
  EXPECT_EQ(phantom_kind_from_string(to_string(PhantomKind::thorax)), PhantomKind::thorax);
  EXPECT_THROW(phantom_kind_from_string("head"), std::invalid_argument);
}

TEST(NormalStream, UniformRangeAndReproducibility) {
  const NormalStream s(3, 1), t(3, 1), other(3, 2);
  for (std::uint64_t c = 0; c < 1000; ++c) {
    const double u = s.uniform(c);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_EQ(s.normal(c), t.normal(c));
  }
  EXPECT_NE(s.normal(0), other.normal(0));
}

TEST(NormalStream, MomentsOfStandardNormal) {
  const NormalStream s(99, 0);
  const std::size_t n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = s.normal(i);
    m1 += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  EXPECT_NEAR(m1, 0.0, 5 * std::sqrt(1.0 / n));
  EXPECT_NEAR(m2, 1.0, 5 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m4, 3.0, 5 * std::sqrt(96.0 / n));
}

TEST(Generate, NoiselessDataIsExactProjection) {
  const Preset p = preset("nonrigid", true);
  const auto ds = generate(p, NoiseModel::absolute(0.0), 5);
  ASSERT_EQ(ds.num_gates(), 10u);
  const auto ops = make_gated_operators(ds.geometry, ds.motion);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(ds.sinograms[i], apply(ops[i], ds.truth));
  EXPECT_EQ(ds.sigma, 0.0);
}

TEST(Generate, SingleGateIsPlainCt) {
  const Geometry g = Geometry::parallel(32, 32, 24, 48);
  const Image x = make_phantom(PhantomKind::nested_shells, 32, 32);
  const auto ds = generate(PhantomKind::nested_shells, x, {MotionParams::identity()}, g, NoiseModel::absolute(0.0), 1);
  ASSERT_EQ(ds.num_gates(), 1u);
  EXPECT_EQ(ds.sinograms[0], forward(g, x));
}

TEST(Generate, RejectsMovingReferenceGate) {
  const Geometry g = Geometry::parallel(16, 16, 8, 24);
  const Image x = make_phantom(PhantomKind::thorax, 16, 16);
  EXPECT_THROW(generate(PhantomKind::thorax, x, {MotionParams::dilatation(1.1)}, g, {}, 0), std::invalid_argument);
  EXPECT_THROW(generate(PhantomKind::thorax, x, {}, g, {}, 0), std::invalid_argument);
  EXPECT_THROW(generate(PhantomKind::thorax, x, {MotionParams::identity()}, g, NoiseModel::absolute(-1.0), 0),
               std::invalid_argument);
}

TEST(Generate, NoiseVarianceScalesWithGateCount) {
  // Pooled over pixels and seeds, the residual variance is σ²/N.
  const Geometry g = Geometry::parallel(16, 16, 8, 24);
  const Image x = make_phantom(PhantomKind::thorax, 16, 16);
  const double sigma = 0.3;
  for (std::size_t n : {1u, 4u}) {
    const auto motion = motion_sequence(MotionKind::dilatation, n, 0.1);
    const auto clean = generate(PhantomKind::thorax, x, motion, g, NoiseModel::absolute(0.0), 0);
    double ss = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
      const auto noisy = generate(PhantomKind::thorax, x, motion, g, NoiseModel::absolute(sigma), seed);
      for (std::size_t i = 0; i < n; ++i) {
        ss += squared_distance(noisy.sinograms[i], clean.sinograms[i]);
        count += clean.sinograms[i].size();
      }
    }
    const double var = ss / double(count);
    const double expected = sigma * sigma / double(n);
    EXPECT_NEAR(var / expected, 1.0, 5 * std::sqrt(2.0 / double(count))) << n;
  }
}

TEST(Generate, GateNoiseIsUncorrelated) {
  const Geometry g = Geometry::parallel(32, 32, 64, 48);
  const Image x(g.image_shape());
  const auto ds = generate(PhantomKind::thorax, x, std::vector<MotionParams>(2, MotionParams::identity()), g,
                           NoiseModel::absolute(1.0), 7);
  const double c = dot(ds.sinograms[0], ds.sinograms[1]) /
                   std::sqrt(squared_norm(ds.sinograms[0]) * squared_norm(ds.sinograms[1]));
  EXPECT_LT(std::abs(c), 5.0 / std::sqrt(double(ds.sinograms[0].size())));
}

TEST(Generate, RelativeNoiseUsesSinogramPeak) {
  const Preset p = preset("rigid", true);
  const auto clean = generate(p, NoiseModel::absolute(0.0), 0);
  double peak = 0.0;
  for (const auto& s : clean.sinograms)
    for (double v : s.values()) peak = std::max(peak, std::abs(v));
  const auto noisy = generate(p, NoiseModel::relative_to_peak(0.02), 0);
  EXPECT_DOUBLE_EQ(noisy.sigma, 0.02 * peak);
  const auto again = generate(p, NoiseModel::relative_to_peak(0.02), 0);
  for (std::size_t i = 0; i < noisy.num_gates(); ++i) EXPECT_EQ(noisy.sinograms[i], again.sinograms[i]);
  const auto other = generate(p, NoiseModel::relative_to_peak(0.02), 1);
  EXPECT_NE(noisy.sinograms[3], other.sinograms[3]);
}

TEST(Presets, Shapes) {
  const Preset r = preset("rigid");
  EXPECT_EQ(r.num_gates, 20u);
  EXPECT_EQ(r.phantom, PhantomKind::nested_shells);
  EXPECT_EQ(r.geometry.image_shape(), (Shape{100, 100}));
  const Preset n = preset("nonrigid", true);
  EXPECT_EQ(n.num_gates, 10u);
  EXPECT_EQ(n.motion, MotionKind::dilatation);
  EXPECT_EQ(n.geometry.image_shape(), (Shape{64, 64}));
  EXPECT_THROW(preset("elastic"), std::invalid_argument);
}
