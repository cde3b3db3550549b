#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "polymerlab/lattice.hpp"
#include "support/brute_force.hpp"

namespace polymerlab {
namespace {

std::vector<Site> slice_sites(const LatticeCone& cone, int t) {
  std::vector<Site> out;
  cone.slice(t).for_each_site([&](std::size_t, const Site& x) { out.push_back(x); });
  return out;
}

TEST(BuildCone, OneDimensionalForwardCone) {
  const auto cone = build_cone(1, 0, 2, {0, Site{}});
  EXPECT_EQ(cone.slice(0).size(), 1u);
  EXPECT_EQ(cone.slice(1).size(), 2u);
  EXPECT_EQ(cone.slice(2).size(), 3u);
  EXPECT_EQ(slice_sites(cone, 1), (std::vector<Site>{{-1}, {1}}));
  EXPECT_EQ(slice_sites(cone, 2), (std::vector<Site>{{-2}, {0}, {2}}));
  EXPECT_EQ(cone.site_count(), 6u);
}

TEST(BuildCone, ThreeDimensionalFirstStep) {
  const auto cone = build_cone(3, 0, 1, {0, Site{}});
  EXPECT_EQ(cone.slice(0).size(), 1u);
  EXPECT_EQ(cone.slice(1).size(), 6u);
}

TEST(BuildCone, SiteCountMatchesDirectEnumeration) {
  const auto cone = build_cone(3, 0, 24, {0, Site{}});
  std::size_t brute = 0;
  for (int t = 0; t <= 24; ++t) {
    const auto sites = testing::admissible_sites(3, t);
    EXPECT_EQ(cone.slice(t).size(), sites.size()) << "t=" << t;
    brute += sites.size();
  }
  EXPECT_EQ(cone.site_count(), brute);
}

TEST(BuildCone, BallCountAgreesWithBoxScan) {
  for (int d = 1; d <= 4; ++d) {
    for (int r = 0; r <= (d == 4 ? 6 : 12); ++r) {
      EXPECT_EQ(ball_count(d, r), testing::admissible_sites(d, r).size()) << d << " " << r;
    }
  }
}

TEST(BuildCone, IndexIsABijectionInLexicographicOrder) {
  for (int d = 1; d <= 4; ++d) {
    const SpaceTimePoint anchor{2, Site{1, -1, 0, 0}};
    const auto cone = build_cone(d, -3, 4, anchor);
    std::vector<std::size_t> seen;
    for (int t = cone.t_min(); t <= cone.t_max(); ++t) {
      const auto expected = testing::admissible_sites(d, std::abs(t - anchor.time));
      std::vector<Site> shifted;
      for (const auto& z : expected) shifted.push_back(z + anchor.site);
      std::sort(shifted.begin(), shifted.end());
      EXPECT_EQ(slice_sites(cone, t), shifted);
      for (const auto& x : shifted) {
        const auto i = cone.index(t, x);
        ASSERT_GE(i, 0);
        const auto back = cone.point(static_cast<std::size_t>(i));
        EXPECT_EQ(back.time, t);
        EXPECT_EQ(back.site, x);
        seen.push_back(static_cast<std::size_t>(i));
      }
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(cone.site_count());
    std::iota(all.begin(), all.end(), 0u);
    EXPECT_EQ(seen, all);
  }
}

TEST(BuildCone, RejectsWrongParityAndOutsideSites) {
  const auto cone = build_cone(2, 0, 3, {0, Site{}});
  EXPECT_LT(cone.index(2, Site{1, 0}), 0);
  EXPECT_LT(cone.index(2, Site{3, 1}), 0);
  EXPECT_LT(cone.index(4, Site{0, 0}), 0);
  EXPECT_GE(cone.index(3, Site{2, -1}), 0);
}

TEST(BuildCone, CapacityErrorInsteadOfTruncation) {
  EXPECT_THROW(build_cone(4, 0, 5000, {0, Site{}}), CapacityError);
  EXPECT_THROW(build_cone(3, 0, 2, {0, Site{}}).slice(3), std::out_of_range);
  EXPECT_THROW(build_cone(0, 0, 2, {0, Site{}}), std::invalid_argument);
}

TEST(WalkDistribution, SmallCases) {
  const auto p0 = n_step_distribution(1, 0);
  EXPECT_EQ(p0.mass(Site{0}), 1.0);
  const auto p2 = n_step_distribution(1, 2);
  EXPECT_EQ(p2.mass(Site{-2}), 0.25);
  EXPECT_EQ(p2.mass(Site{0}), 0.5);
  EXPECT_EQ(p2.mass(Site{2}), 0.25);
  EXPECT_EQ(p2.mass(Site{1}), 0.0);
}

TEST(WalkDistribution, ReturnMassMatchesExhaustiveEnumeration) {
  const double brute = testing::walk_probability(3, 6, Site{});
  EXPECT_NEAR(n_step_distribution(3, 6).mass(Site{}), brute, 1e-15);
  EXPECT_NEAR(brute, 1860.0 / 46656.0, 1e-15);
}

TEST(WalkDistribution, NormalizedAndSymmetric) {
  for (int d = 1; d <= 3; ++d) {
    for (int n = 0; n <= 12; ++n) {
      const auto p = n_step_distribution(d, n);
      EXPECT_NEAR(pairwise_sum(p.masses), 1.0, 1e-12);
      p.support.for_each_site([&](std::size_t i, const Site& x) {
        Site flipped = x;
        flipped[0] = -flipped[0];
        EXPECT_NEAR(p.mass(flipped), p.masses[i], 1e-16);
        Site perm = x;
        std::reverse(perm.begin(), perm.begin() + d);
        EXPECT_NEAR(p.mass(perm), p.masses[i], 1e-16);
      });
    }
  }
}

TEST(Collision, SquaredLawEqualsReturnProbability) {
  for (int d = 1; d <= 3; ++d) {
    const auto returns = return_probabilities(d, 20);
    for (int t = 0; t <= 10; ++t) {
      const auto p = n_step_distribution(d, t);
      std::vector<double> sq;
      for (double m : p.masses) sq.push_back(m * m);
      const double u = pairwise_sum(sq);
      EXPECT_NEAR(u, n_step_distribution(d, 2 * t).mass(Site{}), 1e-12) << d << " " << t;
      EXPECT_NEAR(u, returns[2 * t], 1e-12) << d << " " << t;
    }
  }
}

TEST(Collision, RecurrentDimensions) {
  const auto one = collision_green_function(1, 200);
  EXPECT_TRUE(one.recurrent);
  EXPECT_EQ(one.pi_d, 1.0);
  EXPECT_EQ(one.u[0], 1.0);
  const auto two = collision_green_function(2, 2000);
  EXPECT_TRUE(two.recurrent);
  EXPECT_EQ(two.pi_d, 1.0);
}

TEST(Collision, ThreeDimensionalEstimate) {
  const auto est = collision_green_function(3, 2000);
  EXPECT_FALSE(est.recurrent);
  EXPECT_EQ(est.u[0], 1.0);
  for (std::size_t t = 1; t < est.u.size(); ++t) ASSERT_LE(est.u[t], est.u[t - 1]);
  EXPECT_GT(est.pi_d, 0.0);
  EXPECT_LT(est.pi_d, 1.0);
  EXPECT_LT(est.interval_width(), 0.01);
  EXPECT_LE(est.pi_lower, est.pi_d);
  EXPECT_LE(est.pi_d, est.pi_upper);
  // Frozen output of the truncation-plus-tail estimate.
  EXPECT_NEAR(est.pi_d, 0.34053191046498754, 1e-12);
  // Watson's integral: G = 1.516386059..., so the return probability is 0.3405373...
  EXPECT_GE(0.3405373295509, est.pi_lower);
  EXPECT_LE(0.3405373295509, est.pi_upper);
}

TEST(Collision, TooFewPointsForTailFit) {
  EXPECT_THROW(collision_green_function(3, 8), DiagnosticError);
  EXPECT_THROW(collision_green_function(3, 0), std::invalid_argument);
}

TEST(CollisionCount, EmptySumAtZeroSteps) {
  const auto h = sample_collision_count(3, 0, 7, 1000);
  ASSERT_EQ(h.counts.size(), 1u);
  EXPECT_EQ(h.counts[0], 1000u);
}

TEST(CollisionCount, RecurrentMeanFollowsGreenFunction) {
  const int n = 50;
  const auto est = collision_green_function(1, 200);
  const double exact = std::accumulate(est.u.begin() + 1, est.u.begin() + n + 1, 0.0);
  const std::uint64_t samples = 20000;
  const auto h = sample_collision_count(1, n, 11, samples);
  double second = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) second += double(k) * double(k) * double(h.counts[k]);
  const double mean = h.mean();
  const double se = std::sqrt((second / samples - mean * mean) / samples);
  EXPECT_NEAR(mean, exact, 4 * se);
  // mean overlap keeps growing with N in d = 1
  EXPECT_GT(sample_collision_count(1, 2 * n, 11, samples).mean(), mean + 4 * se);
}

TEST(CollisionCount, Deterministic) {
  const auto a = sample_collision_count(3, 40, 5, 500);
  const auto b = sample_collision_count(3, 40, 5, 500);
  EXPECT_EQ(a.counts, b.counts);
}

TEST(Paths, EnumerationCount) {
  std::size_t count = 0;
  for_each_path(2, 3, Site{}, [&](std::span<const Site> path) {
    ASSERT_EQ(path.size(), 4u);
    for (std::size_t t = 1; t < path.size(); ++t) ASSERT_EQ(l1_norm(path[t] - path[t - 1], 2), 1);
    ++count;
  });
  EXPECT_EQ(count, 64u);
}

}  // namespace
}  // namespace polymerlab
