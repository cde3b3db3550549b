#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "polymerlab/disorder.hpp"
#include "polymerlab/field_io.hpp"
#include "support/brute_force.hpp"

namespace polymerlab {
namespace {

const DisorderLaw kGaussian{LawKind::Gaussian};
const DisorderLaw kUniform{LawKind::Uniform};
const DisorderLaw kRademacher{LawKind::Rademacher};

TEST(Lambda, ClosedForms) {
  EXPECT_DOUBLE_EQ(lambda_of_beta(kGaussian, 0.3), 0.045);
  for (auto law : {kGaussian, kUniform, kRademacher}) EXPECT_EQ(lambda_of_beta(law, 0.0), 0.0);
  EXPECT_NEAR(lambda_of_beta(kRademacher, 1.0), std::log((std::exp(1.0) + std::exp(-1.0)) / 2.0), 1e-15);
  for (double b : {1e-4, 9.9e-4, 1.1e-3, 0.4, 3.0, 25.0}) {
    EXPECT_NEAR(lambda_of_beta(kUniform, b), std::log(std::sinh(b) / b), 1e-13 * std::max(1.0, b)) << b;
  }
}

TEST(Lambda, ConvexitySoGammaIsNonnegative) {
  for (auto law : {kGaussian, kUniform, kRademacher}) {
    for (int k = 1; k <= 10; ++k) {
      const auto p = ModelParams::make(3, 0.1 * k, law);
      EXPECT_GE(p.gamma, 0.0);
      EXPECT_DOUBLE_EQ(p.gamma, p.lambda2 - 2 * p.lambda);
    }
  }
  const auto zero = ModelParams::make(3, 0.0, kUniform);
  EXPECT_EQ(zero.lambda, 0.0);
  EXPECT_EQ(zero.gamma, 0.0);
}

TEST(Lambda, GaussianThresholdIsSqrtOfLogInversePi) {
  const double pi = 0.34;
  EXPECT_NEAR(l2_threshold_beta(kGaussian, pi), std::sqrt(std::log(1.0 / pi)), 1e-12);
  EXPECT_TRUE(std::isinf(l2_threshold_beta(kRademacher, pi)));  // gamma saturates at log 2 < log(1/0.34)
  const double bu = l2_threshold_beta(kUniform, pi);
  const auto pu = ModelParams::make(3, bu, kUniform);
  EXPECT_NEAR(pu.gamma, std::log(1.0 / pi), 1e-9);
}

TEST(Sampling, NormalQuantileAgreesWithBoost) {
  const boost::math::normal_distribution<double> normal;
  for (double p : {1e-12, 1e-6, 0.01, 0.02425, 0.1, 0.3, 0.5, 0.77, 0.97575, 0.999, 1 - 1e-9}) {
    const double exact = boost::math::quantile(normal, p);
    EXPECT_NEAR(normal_quantile(p), exact, 2e-9 * std::max(1.0, std::fabs(exact))) << p;
  }
}

TEST(Sampling, DeterministicAndOrderIndependent) {
  const auto cone = build_cone(3, 0, 6, {0, Site{}});
  std::vector<EnvironmentField> forward;
  for (std::uint64_t i = 0; i < 5; ++i) forward.push_back(sample_environment(cone, kGaussian, 42, i));
  for (std::uint64_t i = 5; i-- > 0;) EXPECT_EQ(sample_environment(cone, kGaussian, 42, i), forward[i]);
  EXPECT_NE(forward[0].values, forward[1].values);
  EXPECT_NE(sample_environment(cone, kGaussian, 43, 0).values, forward[0].values);
}

TEST(Sampling, WindowsAgreeWithTheLazyField) {
  const SeededEnvironment lazy(2, kUniform, 9, 3);
  const auto small = sample_environment(build_cone(2, 0, 4, {0, Site{}}), kUniform, 9, 3);
  const auto shifted = sample_environment(build_cone(2, -2, 3, {-5, Site{1, 0}}), kUniform, 9, 3);
  small.cone.slice(3).for_each_site([&](std::size_t, const Site& x) {
    EXPECT_EQ(small.value(3, x), lazy.value(3, x));
    if (shifted.cone.contains(3, x)) {
      EXPECT_EQ(small.value(3, x), shifted.value(3, x));
    }
  });
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

TEST(Sampling, MomentsOfTheLaws) {
  const SeededEnvironment rad(1, kRademacher, 1, 0);
  const SeededEnvironment gau(1, kGaussian, 1, 0);
  const SeededEnvironment uni(1, kUniform, 1, 0);
  const int n = 1000000;
  std::vector<double> r(n), g(n), u(n);
  for (int i = 0; i < n; ++i) {
    r[i] = rad.value(i, Site{});
    g[i] = gau.value(i, Site{});
    u[i] = uni.value(i, Site{});
    ASSERT_TRUE(r[i] == 1.0 || r[i] == -1.0);
    ASSERT_LE(std::fabs(u[i]), 1.0);
  }
  EXPECT_LT(std::fabs(mean_of(r)), 4.0 / std::sqrt(n));
  const double mg = mean_of(g);
  double var = 0;
  for (double x : g) var += (x - mg) * (x - mg);
  var /= n - 1;
  EXPECT_NEAR(var, 1.0, 0.05);
  EXPECT_LT(std::fabs(mg), 4.0 / std::sqrt(n));
}

LatticeCone five_site_cone() { return build_cone(1, 1, 2, {0, Site{}}); }

TEST(Enumeration, CountsAndProbabilities) {
  const auto cone = five_site_cone();
  ASSERT_EQ(cone.site_count(), 5u);
  int fields = 0;
  double total = 0.0;
  std::vector<double> site_mean(5, 0.0);
  enumerate_environments(cone, [&](const EnvironmentField& f, double prob) {
    ++fields;
    total += prob;
    EXPECT_TRUE(f.provenance.enumerated);
    for (std::size_t i = 0; i < 5; ++i) site_mean[i] += prob * f.values[i];
  });
  EXPECT_EQ(fields, 32);
  EXPECT_EQ(total, 1.0);
  for (double m : site_mean) EXPECT_EQ(m, 0.0);
}

TEST(Enumeration, RefusesLargeCones) {
  const auto cone = build_cone(2, 0, 3, {0, Site{}});
  ASSERT_GT(cone.site_count(), kMaxEnumeratedSites);
  EXPECT_THROW(enumerate_environments(cone, [](const EnvironmentField&, double) {}), CapacityError);
}

TEST(Enumeration, AgreesWithSampling) {
  const auto cone = five_site_cone();
  auto functional = [](const std::vector<double>& v) { return std::exp(0.5 * (v[0] + v[1] * v[2]) - 0.2 * v[4]); };
  double exact = 0.0;
  enumerate_environments(cone, [&](const EnvironmentField& f, double prob) { exact += prob * functional(f.values); });
  const int n = 100000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = functional(sample_environment(cone, kRademacher, 77, i).values);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, exact, 4 * se);
}

TEST(TimeReverse, InvolutionAndFixedPlane) {
  const auto field = sample_environment(build_cone(2, -1, 3, {-1, Site{}}), kGaussian, 3, 0);
  const auto once = time_reverse(field);
  EXPECT_EQ(once.cone.t_min(), -3);
  EXPECT_EQ(once.cone.t_max(), 1);
  EXPECT_EQ(once.value(-2, Site{1, 0}), field.value(2, Site{1, 0}));
  EXPECT_EQ(time_reverse(once), field);

  const auto plane = sample_environment(build_cone(2, 0, 0, {-2, Site{}}), kGaussian, 3, 1);
  const auto flipped = time_reverse(plane);
  EXPECT_EQ(flipped.values, plane.values);
  EXPECT_EQ(flipped.cone.slice(0).size(), plane.cone.slice(0).size());
}

TEST(TimeReverse, TargetWindowMustBeCovered) {
  const auto field = sample_environment(build_cone(1, 0, 3, {0, Site{}}), kGaussian, 3, 0);
  const auto inside = time_reverse(field, build_cone(1, -2, 0, {0, Site{}}));
  EXPECT_EQ(inside.value(-2, Site{2}), field.value(2, Site{2}));
  EXPECT_THROW(time_reverse(field, build_cone(1, -4, 0, {0, Site{}})), WindowError);
}

TEST(TimeReverse, LazyViewMatchesMaterialized) {
  const SeededEnvironment lazy(3, kGaussian, 5, 2);
  const auto rev = reversed(lazy);
  EXPECT_EQ(rev.value(4, Site{1, 2, 3}), lazy.value(-4, Site{1, 2, 3}));
  double row[3];
  fill_row(rev, 4, Site{1, 2, -2}, 3, row);
  EXPECT_EQ(row[2], lazy.value(-4, Site{1, 2, 2}));
}

TEST(FieldFile, RoundTripIsBitExact) {
  const auto field = sample_environment(build_cone(3, -2, 4, {-2, Site{}}), kGaussian, 123, 9);
  std::stringstream buf;
  save_field(field, buf);
  EXPECT_EQ(load_field(buf), field);

  std::stringstream enumerated;
  enumerate_environments(five_site_cone(), [&](const EnvironmentField& f, double) {
    if (f.provenance.sample_index == 19) save_field(f, enumerated);
  });
  const auto back = load_field(enumerated);
  EXPECT_TRUE(back.provenance.enumerated);
  EXPECT_EQ(back.provenance.sample_index, 19u);
}

TEST(FieldFile, DocumentedOffsets) {
  const auto field = sample_environment(build_cone(2, 0, 2, {0, Site{}}), kUniform, 1, 2);
  std::stringstream buf;
  save_field(field, buf);
  const std::string bytes = buf.str();
  constexpr std::size_t header = 4 + 2 + 2 + 4 + 4 + 4 + 1 + 8 + 8 + 8;
  ASSERT_EQ(bytes.size(), header + 8 * field.values.size());
  EXPECT_EQ(bytes.substr(0, 4), "DPRE");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 1);  // law id: uniform
  // (t = 2, x = (0, 2)): after slices 0 and 1, at its rank in lexicographic order of slice 2
  const auto slice2 = testing::admissible_sites(2, 2);
  const auto rank = std::find(slice2.begin(), slice2.end(), Site{0, 2}) - slice2.begin();
  const std::size_t offset = header + 8 * (1 + 4 + static_cast<std::size_t>(rank));
  double stored;
  std::memcpy(&stored, bytes.data() + offset, 8);
  EXPECT_EQ(stored, field.value(2, Site{0, 2}));
}

TEST(FieldFile, RejectsCorruption) {
  const auto field = sample_environment(build_cone(1, 0, 3, {0, Site{}}), kRademacher, 1, 0);
  std::stringstream buf;
  save_field(field, buf);
  std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream a(bad_magic);
  EXPECT_THROW(load_field(a), FormatError);

  std::stringstream b(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_field(b), FormatError);

  std::string bad_version = bytes;
  bad_version[4] = 7;
  std::stringstream c(bad_version);
  EXPECT_THROW(load_field(c), FormatError);

  const auto off_origin = sample_environment(build_cone(1, 0, 3, {0, Site{2}}), kRademacher, 1, 0);
  std::stringstream d;
  EXPECT_THROW(save_field(off_origin, d), FormatError);
}

}  // namespace
}  // namespace polymerlab
