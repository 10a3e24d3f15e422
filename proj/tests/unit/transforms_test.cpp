#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ppodc/errors.hpp"
#include "ppodc/transforms.hpp"
#include "support.hpp"

namespace ppodc::transforms {
namespace {

using testing::Gen;

PlainCluster cluster_of(const std::vector<PlainRecord>& members) {
  PlainCluster c;
  c.lambda.assign(members.front().dim(), BigInt(0));
  c.size = static_cast<long>(members.size());
  for (const auto& r : members)
    for (std::size_t s = 0; s < r.dim(); ++s) c.lambda[s] += static_cast<long>(r.attrs[s]);
  return c;
}

// Independent oracle: ||t - lambda/size||^2 as sum_s (size*t - lambda)^2 / size^2.
Rational naive_distance(const PlainRecord& t, const PlainCluster& c) {
  BigInt num = 0;
  for (std::size_t s = 0; s < t.dim(); ++s) {
    BigInt d = c.size * static_cast<long>(t.attrs[s]) - c.lambda[s];
    num += d * d;
  }
  Rational q(num, c.size * c.size);
  q.canonicalize();
  return q;
}

Rational naive_center_gap(const PlainCluster& a, const PlainCluster& b) {
  Rational total = 0;
  for (std::size_t s = 0; s < a.dim(); ++s) {
    Rational d = Rational(a.lambda[s], a.size) - Rational(b.lambda[s], b.size);
    d.canonicalize();
    total += d * d;
  }
  return total;
}

TEST(ClusterCenter, WorkedExampleOne) {
  auto c = cluster_of({{{0, 2, 1, 0, 3}}, {{1, 1, 3, 4, 2}}, {{0, 1, 0, 2, 0}}});
  auto mu = cluster_center(c);
  std::vector<Rational> expected{Rational(1, 3), Rational(4, 3), Rational(4, 3), Rational(2),
                                 Rational(5, 3)};
  ASSERT_EQ(mu.size(), expected.size());
  for (std::size_t s = 0; s < mu.size(); ++s) EXPECT_EQ(mu[s], expected[s]);
}

TEST(Display, TruncatesToThreeDecimals) {
  EXPECT_EQ(to_decimal(Rational(5, 3)), "1.666");
  EXPECT_EQ(to_decimal(Rational(1, 3)), "0.333");
  EXPECT_EQ(to_decimal(Rational(2)), "2.000");
  EXPECT_EQ(to_decimal(Rational(-7, 4)), "-1.750");
  EXPECT_EQ(to_decimal(Rational(-1, 3)), "-0.333");
  EXPECT_EQ(to_decimal(Rational(1, 1000)), "0.001");
  EXPECT_EQ(truncate_decimal(1.2018504), 1.201);
}

TEST(ClusterCenter, SingleRecordAndZeroRecords) {
  PlainRecord t{{4, 0, 9}};
  auto mu = cluster_center(PlainCluster::of_record(t));
  for (std::size_t s = 0; s < t.dim(); ++s) EXPECT_EQ(mu[s], Rational(t.attrs[s]));
  auto zero = cluster_center(cluster_of({{{0, 0}}, {{0, 0}}}));
  for (const auto& v : zero) EXPECT_EQ(v, 0);
}

TEST(ClusterCenter, EmptyClusterIsDegenerate) {
  PlainCluster c{{BigInt(0)}, BigInt(0)};
  EXPECT_THROW(cluster_center(c), DegenerateClusterError);
}

TEST(ClusterCenter, MeanTimesSizeReproducesSums) {
  Gen gen(31);
  for (int i = 0; i < 200; ++i) {
    auto c = gen.cluster(4, gen.in(1, 20), 1000);
    auto mu = cluster_center(c);
    for (std::size_t s = 0; s < c.dim(); ++s) EXPECT_EQ(mu[s] * Rational(c.size), Rational(c.lambda[s]));
  }
}

TEST(Distance, WorkedExampleTwo) {
  auto c = cluster_of({{{0, 2, 1, 0, 3}}, {{1, 1, 3, 4, 2}}, {{0, 1, 0, 2, 0}}});
  PlainRecord t{{0, 1, 1, 3, 2}};
  EXPECT_EQ(squared_distance(t, c), Rational(13, 9));
  EXPECT_NEAR(euclidean_distance(t, c), std::sqrt(13.0 / 9.0), 1e-12);
  EXPECT_EQ(truncate_decimal(euclidean_distance(t, c)), 1.201);
}

TEST(Distance, ZeroToOwnSingleton) {
  PlainRecord t{{3, 1, 4}};
  EXPECT_EQ(squared_distance(t, PlainCluster::of_record(t)), 0);
}

TEST(Distance, MatchesNaiveOracle) {
  Gen gen(32);
  for (int i = 0; i < 500; ++i) {
    auto t = gen.record(5, 1000);
    auto c = gen.cluster(5, gen.in(1, 30), 1000);
    ASSERT_EQ(squared_distance(t, c), naive_distance(t, c));
  }
}

TEST(Distance, DimensionMismatchIsUsageError) {
  PlainRecord t{{1, 2}};
  EXPECT_THROW(squared_distance(t, PlainCluster::of_record({{1, 2, 3}})), UsageError);
}

TEST(ScalingFactors, Examples) {
  auto sf = scaling_factors({BigInt(2), BigInt(3), BigInt(4)});
  EXPECT_EQ(sf.alpha, 24);
  EXPECT_EQ(sf.alphas, (std::vector<BigInt>{12, 8, 6}));
  auto ones = scaling_factors({BigInt(1), BigInt(1)});
  EXPECT_EQ(ones.alpha, 1);
  EXPECT_EQ(ones.alphas, (std::vector<BigInt>{1, 1}));
  EXPECT_THROW(scaling_factors({BigInt(2), BigInt(0)}), DegenerateClusterError);
}

TEST(ScalingFactors, ProductIdentity) {
  Gen gen(33);
  for (int i = 0; i < 200; ++i) {
    std::vector<BigInt> sizes;
    for (int j = 0, k = static_cast<int>(gen.in(1, 6)); j < k; ++j) sizes.emplace_back(gen.in(1, 500));
    auto sf = scaling_factors(sizes);
    for (std::size_t j = 0; j < sizes.size(); ++j) EXPECT_EQ(sf.alphas[j] * sizes[j], sf.alpha);
  }
}

TEST(Oped, UnitSizesGivePlainDistance) {
  PlainRecord t{{5, 0, 7}};
  auto c = PlainCluster::of_record({{1, 3, 7}});
  EXPECT_EQ(oped_squared(t, c, 1, 1), 16 + 9);
}

// Random configurations for the property tests: k clusters of l attributes.
struct Config {
  std::vector<PlainCluster> clusters;
  PlainRecord t;
};

Config random_config(Gen& gen) {
  Config cfg;
  auto k = static_cast<std::size_t>(gen.in(2, 5));
  auto l = static_cast<std::size_t>(gen.in(1, 6));
  std::int64_t v = gen.in(0, 1) ? 10 : 1000;  // small domains force ties
  for (std::size_t j = 0; j < k; ++j) cfg.clusters.push_back(gen.cluster(l, gen.in(1, 12), v));
  cfg.t = gen.record(l, v);
  return cfg;
}

TEST(Oped, ExactlyAlphaSquaredTimesDistance) {
  Gen gen(34);
  for (int i = 0; i < 1000; ++i) {
    auto cfg = random_config(gen);
    std::vector<BigInt> sizes;
    for (const auto& c : cfg.clusters) sizes.push_back(c.size);
    auto sf = scaling_factors(sizes);
    for (std::size_t h = 0; h < cfg.clusters.size(); ++h) {
      Rational expected = Rational(sf.alpha * sf.alpha) * naive_distance(cfg.t, cfg.clusters[h]);
      ASSERT_EQ(Rational(oped_squared(cfg.t, cfg.clusters[h], sf.alpha, sf.alphas[h])), expected);
    }
  }
}

TEST(Oped, ArgminSetInvariance) {
  Gen gen(35);
  int ties = 0;
  for (int i = 0; i < 1000; ++i) {
    auto cfg = random_config(gen);
    std::vector<BigInt> sizes;
    for (const auto& c : cfg.clusters) sizes.push_back(c.size);
    auto sf = scaling_factors(sizes);
    std::vector<BigInt> oped;
    std::vector<Rational> exact;
    for (std::size_t h = 0; h < cfg.clusters.size(); ++h) {
      oped.push_back(oped_squared(cfg.t, cfg.clusters[h], sf.alpha, sf.alphas[h]));
      exact.push_back(naive_distance(cfg.t, cfg.clusters[h]));
    }
    auto min_oped = *std::min_element(oped.begin(), oped.end());
    auto min_exact = *std::min_element(exact.begin(), exact.end());
    std::set<std::size_t> a, b;
    for (std::size_t h = 0; h < oped.size(); ++h) {
      if (oped[h] == min_oped) a.insert(h);
      if (exact[h] == min_exact) b.insert(h);
    }
    ASSERT_EQ(a, b);
    ties += a.size() > 1 ? 1 : 0;
    EXPECT_EQ(nearest_cluster(cfg.t, cfg.clusters), *b.begin());
  }
  EXPECT_GT(ties, 0);
}

TEST(Termination, IdenticalClustersHoldForAnyBeta) {
  Gen gen(36);
  std::vector<PlainCluster> cur{gen.cluster(3, 4, 100), gen.cluster(3, 2, 100)};
  EXPECT_EQ(termination_lhs(cur, cur), 0);
  EXPECT_TRUE(termination_holds_scaled(cur, cur, 0));
  EXPECT_TRUE(termination_holds_exact(cur, cur, 0));
}

TEST(Termination, FactorsMatchDefinition) {
  std::vector<PlainCluster> cur{{{BigInt(4)}, BigInt(2)}, {{BigInt(9)}, BigInt(3)}};
  std::vector<PlainCluster> nxt{{{BigInt(5)}, BigInt(5)}, {{BigInt(1)}, BigInt(1)}};
  auto p = termination_factors(cur, nxt);
  EXPECT_EQ(p.f, 2 * 5 * 3 * 1);
  EXPECT_EQ(p.fj, (std::vector<BigInt>{3, 10}));
  EXPECT_EQ(termination_rhs(p.f, 7), 30 * 30 * 7);
}

TEST(Termination, IntegerFormEquivalentToRational) {
  Gen gen(37);
  int held = 0;
  for (int i = 0; i < 1000; ++i) {
    auto k = static_cast<std::size_t>(gen.in(1, 4));
    auto l = static_cast<std::size_t>(gen.in(1, 5));
    std::int64_t v = gen.in(0, 1) ? 5 : 1000;
    std::vector<PlainCluster> cur, nxt;
    for (std::size_t j = 0; j < k; ++j) {
      cur.push_back(gen.cluster(l, gen.in(1, 10), v));
      nxt.push_back(gen.in(0, 3) == 0 ? cur.back() : gen.cluster(l, gen.in(1, 10), v));
    }
    Rational gap = 0;
    for (std::size_t j = 0; j < k; ++j) gap += naive_center_gap(cur[j], nxt[j]);
    // beta around the true gap so both outcomes occur.
    BigInt floor_gap = gap.get_num() / gap.get_den();
    BigInt beta = floor_gap + gen.in(-1, 1);
    if (beta < 0) beta = 0;
    bool expected = gap <= Rational(beta);
    ASSERT_EQ(termination_holds_scaled(cur, nxt, beta), expected);
    ASSERT_EQ(termination_holds_exact(cur, nxt, beta), expected);
    held += expected ? 1 : 0;
  }
  EXPECT_GT(held, 100);
  EXPECT_LT(held, 900);
}

TEST(Termination, ZeroBetaWithMovedCentersFails) {
  std::vector<PlainCluster> cur{PlainCluster::of_record({{0, 0}})};
  std::vector<PlainCluster> nxt{PlainCluster::of_record({{0, 1}})};
  EXPECT_FALSE(termination_holds_scaled(cur, nxt, 0));
  EXPECT_TRUE(termination_holds_scaled(cur, nxt, 1));
}

TEST(Termination, ZeroSizeIsDegenerate) {
  std::vector<PlainCluster> cur{{{BigInt(0)}, BigInt(0)}};
  EXPECT_THROW(termination_lhs(cur, cur), DegenerateClusterError);
}

TEST(InitialIndices, DeterministicAndDistinct) {
  EXPECT_EQ(choose_initial_indices(50, 4, 9), choose_initial_indices(50, 4, 9));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto idx = choose_initial_indices(30, 5, seed);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 5u);
    for (auto i : idx) EXPECT_LT(i, 30u);
  }
  auto all = choose_initial_indices(6, 6, 3);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 6u);
  EXPECT_THROW(choose_initial_indices(3, 4, 1), ConfigError);
}

TEST(Lloyd, EachRecordItsOwnCluster) {
  std::vector<PlainRecord> recs{{{1, 2}}, {{7, 7}}, {{3, 9}}};
  auto res = lloyd_kmeans(recs, 3, 0, {0, 1, 2});
  EXPECT_EQ(res.iterations, 1);
  EXPECT_TRUE(res.converged);
  for (std::size_t h = 0; h < 3; ++h) {
    EXPECT_EQ(res.centers[h][0], Rational(recs[h].attrs[0]));
    EXPECT_EQ(res.centers[h][1], Rational(recs[h].attrs[1]));
  }
}

TEST(Lloyd, TwoSeparatedGroups) {
  std::vector<PlainRecord> recs{{{0, 0}},     {{2, 0}},     {{0, 2}},     {{2, 2}},
                                {{100, 100}}, {{102, 100}}, {{100, 102}}, {{102, 102}}};
  auto res = lloyd_kmeans(recs, 2, 0, {0, 4});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_EQ(res.centers[0], (Center{Rational(1), Rational(1)}));
  EXPECT_EQ(res.centers[1], (Center{Rational(101), Rational(101)}));
}

TEST(Lloyd, EmptyClusterKeepsPreviousState) {
  // Record 2 duplicates record 0; the cluster seeded by record 2 loses the tie.
  std::vector<PlainRecord> recs{{{5}}, {{50}}, {{5}}};
  std::vector<PlainCluster> cur{PlainCluster::of_record(recs[0]), PlainCluster::of_record(recs[1]),
                                PlainCluster::of_record(recs[2])};
  auto next = lloyd_step(recs, cur);
  EXPECT_EQ(next[0].size, 2);
  EXPECT_EQ(next[1].size, 1);
  EXPECT_EQ(next[2], cur[2]);
}

TEST(Lloyd, TimeoutReturnsLastState) {
  Gen gen(38);
  std::vector<PlainRecord> recs;
  for (int i = 0; i < 40; ++i) recs.push_back(gen.record(2, 1000));
  auto res = lloyd_kmeans(recs, 3, 0, {0, 1, 2}, 1);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.clusters, lloyd_step(recs, {PlainCluster::of_record(recs[0]),
                                            PlainCluster::of_record(recs[1]),
                                            PlainCluster::of_record(recs[2])}));
}

TEST(Lloyd, RejectsBadArguments) {
  std::vector<PlainRecord> recs{{{1}}, {{2}}};
  EXPECT_THROW(lloyd_kmeans(recs, 3, 0, {0, 1, 1}), ConfigError);
  EXPECT_THROW(lloyd_kmeans(recs, 2, 0, {0, 0}), UsageError);
  EXPECT_THROW(lloyd_kmeans(recs, 2, 0, {0, 5}), UsageError);
  EXPECT_THROW(lloyd_kmeans(recs, 2, 0, {0, 1}, 0), ConfigError);
}

}  // namespace
}  // namespace ppodc::transforms
