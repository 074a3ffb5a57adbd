#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "topk/score_core.hpp"

using topk::VectorXd;

TEST(TopK, ExampleVector) {
  const VectorXd s = fixtures::illustration_scores();
  EXPECT_EQ(topk::top_k(s, 2), 2.4);
  EXPECT_EQ(topk::top_k(s, 1), 2.6);
  EXPECT_EQ(topk::top_k(VectorXd::Constant(3, 1.5), 2), 1.5);
}

TEST(TopK, RangeErrors) {
  const VectorXd s = fixtures::illustration_scores();
  EXPECT_THROW(topk::top_k(s, 0), std::invalid_argument);
  EXPECT_THROW(topk::top_k(s, 5), std::invalid_argument);
  EXPECT_THROW(topk::topsum_k(s, -1), std::invalid_argument);
  EXPECT_THROW(topk::topsum_k(s, 5), std::invalid_argument);
  EXPECT_THROW(topk::argtop_k(s, 0), std::invalid_argument);
  EXPECT_THROW(topk::argtops_k(s, 5), std::invalid_argument);
}

TEST(TopSum, ExampleAndConventions) {
  const VectorXd s = fixtures::illustration_scores();
  EXPECT_DOUBLE_EQ(topk::topsum_k(s, 2), oracle::topsum(s, 2));
  EXPECT_DOUBLE_EQ(topk::topsum_k(s, 2), 5.0);
  EXPECT_EQ(topk::topsum_k(s, 0), 0.0);
  EXPECT_EQ(topk::topsum_k(s, 4), s.sum());
}

TEST(ArgTop, ExamplesAndTieRule) {
  VectorXd expected(4);
  expected << 1, 0, 0, 0;
  EXPECT_EQ(topk::argtop_k(fixtures::illustration_scores(), 2), expected);

  VectorXd a(2);
  a << 5, 1;
  EXPECT_EQ(topk::argtop_k(a, 1), (VectorXd(2) << 1, 0).finished());
  VectorXd tie(2);
  tie << 1, 1;
  EXPECT_EQ(topk::argtop_k(tie, 1), (VectorXd(2) << 1, 0).finished());
  EXPECT_EQ(topk::argtop_k(tie, 2), (VectorXd(2) << 0, 1).finished());
}

TEST(ArgTops, ExamplesAndTieRule) {
  EXPECT_EQ(topk::argtops_k(fixtures::illustration_scores(), 2), (VectorXd(4) << 1, 1, 0, 0).finished());
  EXPECT_EQ(topk::argtops_k((VectorXd(3) << 3, 2, 1).finished(), 3), VectorXd::Ones(3));
  EXPECT_EQ(topk::argtops_k(VectorXd::Ones(3), 2), (VectorXd(3) << 1, 1, 0).finished());
}

TEST(ScoreCore, WorksOnFloatAndExpressions) {
  Eigen::VectorXf f(3);
  f << 1.f, 3.f, 2.f;
  EXPECT_EQ(topk::top_k(f, 2), 2.f);
  const VectorXd s = fixtures::illustration_scores();
  EXPECT_DOUBLE_EQ(topk::topsum_k(2.0 * s, 2), 10.0);
}

// ---------------------------------------------------------------------------
// Properties on random inputs

class ScoreCoreProperty : public ::testing::Test {
 protected:
  std::mt19937_64 rng{20240613};
};

TEST_F(ScoreCoreProperty, MatchesSortOracle) {
  for (int trial = 0; trial < 500; ++trial) {
    const topk::Index L = 2 + static_cast<topk::Index>(rng() % 30);
    VectorXd s = oracle::gaussian(rng, L);
    if (trial % 3 == 0) s = s.array().round();  // plenty of ties
    for (topk::Index k = 1; k <= L; ++k) {
      ASSERT_EQ(topk::top_k(s, k), oracle::top(s, k));
      ASSERT_NEAR(topk::topsum_k(s, k), oracle::topsum(s, k), 1e-12);
      ASSERT_EQ(topk::argtops_k(s, k), oracle::argtops(s, k));
      const VectorXd ind = topk::argtop_k(s, k);
      ASSERT_EQ(ind.sum(), 1.0);
      ASSERT_EQ(s.dot(ind), oracle::top(s, k));
    }
  }
}

TEST_F(ScoreCoreProperty, PermutationEquivariance) {
  for (int trial = 0; trial < 200; ++trial) {
    const topk::Index L = 2 + static_cast<topk::Index>(rng() % 20);
    const VectorXd s = oracle::gaussian(rng, L);  // tie-free almost surely
    std::vector<topk::Index> perm(static_cast<std::size_t>(L));
    std::iota(perm.begin(), perm.end(), topk::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    VectorXd ps(L);
    for (topk::Index i = 0; i < L; ++i) ps(i) = s(perm[static_cast<std::size_t>(i)]);
    const topk::Index k = 1 + static_cast<topk::Index>(rng() % static_cast<std::uint64_t>(L));
    ASSERT_EQ(topk::top_k(ps, k), topk::top_k(s, k));
    const VectorXd a = topk::argtops_k(s, k), pa = topk::argtops_k(ps, k);
    for (topk::Index i = 0; i < L; ++i) ASSERT_EQ(pa(i), a(perm[static_cast<std::size_t>(i)]));
  }
}

TEST_F(ScoreCoreProperty, TranslationAndDecomposition) {
  std::uniform_int_distribution<int> small(-64, 64);
  for (int trial = 0; trial < 300; ++trial) {
    const topk::Index L = 2 + static_cast<topk::Index>(rng() % 20);
    const topk::Index k = static_cast<topk::Index>(rng() % static_cast<std::uint64_t>(L + 1));
    // Dyadic inputs: every sum below is exact in binary floating point.
    VectorXd s(L);
    for (topk::Index i = 0; i < L; ++i) s(i) = small(rng) / 8.0;
    const double c = small(rng) / 4.0;
    ASSERT_EQ(topk::topsum_k((s.array() + c).matrix(), k), topk::topsum_k(s, k) + static_cast<double>(k) * c);

    const VectorXd g = oracle::gaussian(rng, L);
    const double cg = oracle::gaussian(rng, 1)(0) * 10.0;
    ASSERT_NEAR(topk::topsum_k((g.array() + cg).matrix(), k), topk::topsum_k(g, k) + static_cast<double>(k) * cg,
                1e-12 * (1.0 + std::abs(cg) * static_cast<double>(k)));
    if (k >= 1) {
      ASSERT_NEAR(topk::top_k(g, k), topk::topsum_k(g, k) - topk::topsum_k(g, k - 1), 1e-12);
    }
  }
}

TEST_F(ScoreCoreProperty, ConvexityAndKnapsackOptimality) {
  for (int trial = 0; trial < 300; ++trial) {
    const topk::Index L = 2 + static_cast<topk::Index>(rng() % 8);
    const topk::Index k = 1 + static_cast<topk::Index>(rng() % static_cast<std::uint64_t>(L));
    const VectorXd a = oracle::gaussian(rng, L), b = oracle::gaussian(rng, L);
    ASSERT_LE(topk::topsum_k(((a + b) / 2.0).eval(), k),
              (topk::topsum_k(a, k) + topk::topsum_k(b, k)) / 2.0 + 1e-12);

    const VectorXd z = topk::argtops_k(a, k);
    ASSERT_NEAR(z.dot(a), topk::topsum_k(a, k), 1e-12);
    // No K-hot vector does better.
    oracle::for_each_subset(L, k, [&](const std::vector<topk::Index>& A) {
      double v = 0.0;
      for (auto j : A) v += a(j);
      ASSERT_LE(v, z.dot(a) + 1e-12);
    });
  }
}

TEST(Ranking, OrdersWithTieRule) {
  const VectorXd s = (VectorXd(5) << 1, 3, 3, 0, 1).finished();
  const auto r = topk::ranking(s);
  EXPECT_EQ(r, (std::vector<topk::Index>{1, 2, 0, 4, 3}));
}

TEST(Validation, RejectsDegenerateScores) {
  EXPECT_THROW(topk::validate_scores(VectorXd::Zero(1)), std::invalid_argument);
  VectorXd bad = VectorXd::Zero(3);
  bad(1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(topk::validate_scores(bad), std::invalid_argument);
  EXPECT_NO_THROW(topk::validate_scores(VectorXd::Zero(2)));
}
