#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "topk/gradcheck.hpp"
#include "topk/losses.hpp"

using topk::Index;
using topk::LossKind;
using topk::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

VectorXd delta(Index L, Index y) { return VectorXd::Unit(L, y); }

}  // namespace

// ---------------------------------------------------------------------------
// Worked examples (labels are 0-based)

TEST(TopK01, Examples) {
  const VectorXd s = fixtures::illustration_scores();
  EXPECT_EQ(topk::loss_topk_01(s, 1, 1), 0.0);
  EXPECT_EQ(topk::loss_topk_01(s, 3, 2), 1.0);
  for (Index y = 0; y < 3; ++y)
    for (Index k = 1; k <= 3; ++k) EXPECT_EQ(topk::loss_topk_01(VectorXd::Constant(3, 0.4), y, k), 0.0);
  EXPECT_THROW(topk::loss_topk_01(s, 4, 1), std::invalid_argument);
  EXPECT_THROW(topk::loss_topk_01(s, 0, 5), std::invalid_argument);
}

TEST(CrossEntropy, Examples) {
  EXPECT_DOUBLE_EQ(topk::loss_ce(vec({0, 0}), 0).value, std::log(2.0));
  EXPECT_NEAR(topk::loss_ce(vec({100, 0}), 0).value, 0.0, 1e-40);
  EXPECT_TRUE(std::isfinite(topk::loss_ce(vec({1000, -1000, 0}), 1).value));
  std::mt19937_64 rng(1);
  const VectorXd s = oracle::gaussian(rng, 7);
  const auto e = topk::loss_ce(s, 3);
  EXPECT_NEAR(e.grad.sum(), 0.0, 1e-15);
  EXPECT_TRUE(e.grad.isApprox(oracle::softmax(s) - delta(7, 3), 1e-14));
}

TEST(Ldam, Examples) {
  const auto ln2 = topk::MarginTable::uniform(2, std::log(2.0));
  EXPECT_NEAR(topk::loss_ldam(vec({0, 0}), 0, ln2).value, std::log(3.0), 1e-15);
  const auto zero = topk::MarginTable::uniform(2, 0.0);
  const VectorXd s = vec({0.3, -1.2});
  EXPECT_EQ(topk::loss_ldam(s, 1, zero).value, topk::loss_ce(s, 1).value);
  EXPECT_EQ(topk::loss_ldam(s, 1, zero).grad, topk::loss_ce(s, 1).grad);
  double prev = -1.0;
  for (double m : {0.0, 0.1, 0.5, 1.0, 3.0}) {
    const double v = topk::loss_ldam(s, 1, topk::MarginTable::uniform(2, m)).value;
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Focal, Examples) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const VectorXd s = oracle::gaussian(rng, 5, 2.0);
    const auto ce = topk::loss_ce(s, t % 5);
    const auto f = topk::loss_focal(s, t % 5, 0.0);
    EXPECT_EQ(f.value, ce.value);
    EXPECT_EQ(f.grad, ce.grad);
  }
  EXPECT_NEAR(topk::loss_focal(vec({100, 0}), 0, 2.0).value, 0.0, 1e-40);
  EXPECT_THROW(topk::loss_focal(vec({0, 0}), 0, -1.0), std::invalid_argument);
}

TEST(Focal, TableLiteralFormIsAvailable) {
  const VectorXd s = vec({0.5, -0.5, 0.1});
  const double ce = topk::loss_ce(s, 1).value;
  const auto lit = topk::loss_focal(s, 1, 2.0, topk::FocalForm::table_literal);
  EXPECT_NEAR(lit.value, std::pow(1.0 - std::log(ce), 2.0) * ce, 1e-14);
  const auto fd = oracle::finite_difference(
      [&](const VectorXd& x) { return topk::loss_focal(x, 1, 2.0, topk::FocalForm::table_literal).value; }, s, 1e-6);
  EXPECT_LT((fd - lit.grad).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Hinge, Examples) {
  EXPECT_EQ(topk::loss_hinge_topk(vec({3, 0, 0}), 0, 1).value, 0.0);
  EXPECT_EQ(topk::loss_hinge_topk(vec({0, 0, 0}), 0, 1).value, 1.0);
  const auto e = topk::loss_hinge_topk(fixtures::illustration_scores(), 1, 2);
  EXPECT_NEAR(e.value, 0.7, 1e-15);
  EXPECT_EQ(e.grad, vec({0, -1, 1, 0}));
  EXPECT_THROW(topk::loss_hinge_topk(vec({0, 0, 0}), 0, 3), std::invalid_argument);
}

TEST(CvxHinge, Examples) {
  EXPECT_EQ(topk::loss_cvx_hinge_topk(vec({0, 0, 0}), 0, 2).value, 1.0);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const VectorXd s = oracle::gaussian(rng, 6);
    const Index y = t % 6;
    double cs = -1e300;
    for (Index j = 0; j < 6; ++j) cs = std::max(cs, (j == y ? 0.0 : 1.0) + s(j));
    EXPECT_NEAR(topk::loss_cvx_hinge_topk(s, y, 1).value, std::max(0.0, cs - s(y)), 1e-14);
  }
}

TEST(CalHinge, Examples) {
  EXPECT_EQ(topk::loss_cal_hinge_topk(vec({0, 0, 0}), 0, 1).value, 1.0);
  const auto e = topk::loss_cal_hinge_topk(fixtures::illustration_scores(), 1, 1);
  EXPECT_NEAR(e.value, 0.8, 1e-15);
  EXPECT_EQ(e.grad, vec({1, -1, 0, 0}));
  const auto zero = topk::loss_cal_hinge_topk(vec({5, 1, 0.5}), 0, 1);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_EQ(zero.grad, VectorXd::Zero(3));
  EXPECT_THROW(topk::loss_cal_hinge_topk(vec({0, 0, 0}), 0, 3), std::invalid_argument);
}

TEST(HingeFamily, KinkUsesGreaterOrEqual) {
  // 1 + top_2 == s_y exactly: value 0 but the subgradient is the active one.
  const auto e = topk::loss_cal_hinge_topk(vec({2, 1, 0.5}), 0, 1);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.grad, vec({-1, 1, 0}));
}

TEST(NoisedBalanced, IllustrationValues) {
  const VectorXd s = fixtures::illustration_scores();
  const auto z = fixtures::illustration_noise();
  const auto e = topk::loss_noised_balanced(s, 1, 1, 1.0, z);
  EXPECT_NEAR(e.value, 1.0 + (2.5 + 2.5 + 2.4) / 3.0 - 2.6, 1e-12);
  const VectorXd third = VectorXd::Constant(3, 1.0 / 3.0);
  EXPECT_EQ(e.grad, (VectorXd(4) << third, 0.0).finished() - delta(4, 1));
  EXPECT_NEAR(e.grad.sum(), 0.0, 1e-15);
}

TEST(MarginTable, Examples) {
  const std::vector<std::int64_t> one{16};
  EXPECT_DOUBLE_EQ(topk::build_margin_table(one, 2.0)(0), 1.0);

  // The rare class carries the larger margin; the common one is C / 10000^(1/4).
  const topk::MarginTable t({10000, 10}, 0.2 * std::pow(10.0, 0.25));
  EXPECT_NEAR(t(1), 0.2, 1e-15);
  EXPECT_NEAR(t(0), 0.2 * std::pow(10.0 / 10000.0, 0.25), 1e-15);
  EXPECT_NEAR(t(0), 0.035566, 1e-6);
  EXPECT_GT(t(1), t(0));

  const topk::MarginTable eq({7, 7, 7}, 0.3);
  EXPECT_EQ(eq(0), eq(1));
  EXPECT_EQ(eq(1), eq(2));

  const topk::MarginTable q({5, 20}, 1.0);
  EXPECT_NEAR(q(1), q(0) / std::sqrt(2.0), 1e-15);

  const auto fm = topk::MarginTable::from_max_margin({200, 50, 5}, 0.4);
  EXPECT_NEAR(fm.max_margin(), 0.4, 1e-15);
  EXPECT_NEAR(fm(2), 0.4, 1e-15);

  EXPECT_THROW(topk::MarginTable({3, 0}, 1.0), std::invalid_argument);
  EXPECT_THROW(topk::MarginTable({3, 1}, 0.0), std::invalid_argument);
}

TEST(NoisedImbalanced, RareClassLossDominatesOnTies) {
  const topk::MarginTable t({10000, 10}, 0.2 * std::pow(10.0, 0.25));
  const auto z = topk::sample_noise(2, 3, 5);
  const VectorXd s = vec({0.0, 0.0});
  // K = 1 needs L >= 2; top_2 of a 2-vector is the minimum.
  EXPECT_GE(topk::loss_noised_imbalanced(s, 1, 1, 0.5, z, t).value,
            topk::loss_noised_imbalanced(s, 0, 1, 0.5, z, t).value);
}

// ---------------------------------------------------------------------------
// Reductions (bitwise)

TEST(Reductions, ExactIdentities) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 500; ++t) {
    const Index L = 2 + static_cast<Index>(rng() % 10);
    const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
    const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(L - 1));
    const VectorXd s = oracle::gaussian(rng, L, 1.5);
    const auto z = topk::sample_noise(L, 3, rng());

    const auto cal = topk::loss_cal_hinge_topk(s, y, k);
    const auto bal0 = topk::loss_noised_balanced(s, y, k, 0.0, z);
    EXPECT_EQ(bal0.value, cal.value);
    EXPECT_EQ(bal0.grad, cal.grad);
    const auto unit = topk::MarginTable::uniform(L, 1.0);
    const auto imb0 = topk::loss_noised_imbalanced(s, y, k, 0.0, z, unit);
    EXPECT_EQ(imb0.value, cal.value);
    EXPECT_EQ(imb0.grad, cal.grad);

    const auto bal = topk::loss_noised_balanced(s, y, k, 0.3, z);
    const auto imb = topk::loss_noised_imbalanced(s, y, k, 0.3, z, unit);
    EXPECT_EQ(imb.value, bal.value);
    EXPECT_EQ(imb.grad, bal.grad);

    const auto ce = topk::loss_ce(s, y);
    const auto ldam = topk::loss_ldam(s, y, topk::MarginTable::uniform(L, 0.0));
    EXPECT_EQ(ldam.value, ce.value);
    EXPECT_EQ(ldam.grad, ce.grad);
  }
}

// ---------------------------------------------------------------------------
// Log-sum-exp smoothed hinge

TEST(SmoothedHinge, DynamicProgramMatchesEnumeration) {
  std::mt19937_64 rng(12);
  for (Index L = 2; L <= 12; ++L) {
    for (Index k = 1; k <= std::min<Index>(5, L - 1); ++k) {
      for (int t = 0; t < 20; ++t) {
        const VectorXd s = oracle::gaussian(rng, L, 2.0);
        const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
        const double tau = std::exp(oracle::gaussian(rng, 1)(0));
        const double dp = topk::loss_smoothed_hinge_topk(s, y, k, tau).value;
        const double bf = oracle::smoothed_hinge_bruteforce(s, y, k, tau);
        EXPECT_LE(std::abs(dp - bf), 1e-10 * std::abs(bf)) << "L=" << L << " K=" << k;
      }
    }
  }
}

TEST(SmoothedHinge, ZeroTemperatureLimit) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> ints(-3, 3);
  for (int t = 0; t < 100; ++t) {
    const Index L = 3 + static_cast<Index>(rng() % 6);
    const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(std::min<Index>(4, L - 1)));
    VectorXd s(L);
    for (Index j = 0; j < L; ++j) s(j) = ints(rng);
    const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
    EXPECT_NEAR(topk::loss_smoothed_hinge_topk(s, y, k, 1e-4).value,
                oracle::smoothed_hinge_zero_temperature(s, y, k), 1e-3);
  }
}

TEST(SmoothedHinge, GradientIsDenseAndMatchesDifferences) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 100; ++t) {
    const Index L = 3 + static_cast<Index>(rng() % 10);
    const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(std::min<Index>(5, L - 1)));
    const VectorXd s = oracle::gaussian(rng, L);
    const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
    const auto e = topk::loss_smoothed_hinge_topk(s, y, k, 1.0);
    EXPECT_GT(e.grad.cwiseAbs().minCoeff(), 0.0);
    const auto fd = oracle::finite_difference(
        [&](const VectorXd& x) { return topk::loss_smoothed_hinge_topk(x, y, k, 1.0).value; }, s, 1e-6);
    EXPECT_LT((fd - e.grad).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_THROW(topk::loss_smoothed_hinge_topk(vec({0, 1, 2}), 0, 1, 0.0), std::invalid_argument);
  EXPECT_THROW(topk::loss_smoothed_hinge_topk(vec({0, 1, 2}), 0, 3, 1.0), std::invalid_argument);
}

TEST(SmoothedHinge, StableForLargeScores) {
  const VectorXd s = vec({500, -400, 300, 0, 1e3});
  const auto e = topk::loss_smoothed_hinge_topk(s, 2, 2, 0.01);
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_TRUE(e.grad.allFinite());
}

// ---------------------------------------------------------------------------
// Smooth losses: gradients to 1e-8 against an independent difference quotient

TEST(SmoothLosses, FiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    const Index L = 2 + static_cast<Index>(rng() % 10);
    const VectorXd s = oracle::gaussian(rng, L, 2.0);
    const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
    std::vector<std::int64_t> counts(static_cast<std::size_t>(L));
    for (auto& c : counts) c = 1 + static_cast<std::int64_t>(rng() % 500);
    const topk::MarginTable m(counts, 0.5);
    const double gamma = 0.5 + static_cast<double>(t % 4);

    auto check = [&](auto f, const VectorXd& grad) {
      const VectorXd fd = oracle::finite_difference(f, s, 1e-6);
      EXPECT_LT((fd - grad).cwiseAbs().maxCoeff(), 1e-8);
    };
    check([&](const VectorXd& x) { return topk::loss_ce(x, y).value; }, topk::loss_ce(s, y).grad);
    check([&](const VectorXd& x) { return topk::loss_ldam(x, y, m).value; }, topk::loss_ldam(s, y, m).grad);
    check([&](const VectorXd& x) { return topk::loss_focal(x, y, gamma).value; },
          topk::loss_focal(s, y, gamma).grad);
  }
}

// ---------------------------------------------------------------------------
// Piecewise-linear and noised losses through the gradient checker

TEST(Gradcheck, NoisedAndHingeLossesAwayFromKinks) {
  const auto shared_margins =
      std::make_shared<const topk::MarginTable>(topk::MarginTable({400, 120, 60, 30, 15, 8, 4, 2, 1, 1}, 0.5));
  for (LossKind kind : {LossKind::noised_balanced, LossKind::noised_imbalanced, LossKind::hinge,
                        LossKind::cvx_hinge, LossKind::cal_hinge}) {
    topk::GradcheckOptions o;
    o.spec.kind = kind;
    o.spec.k = 3;
    o.spec.epsilon = 0.5;
    o.spec.noise_samples = 5;
    if (topk::uses_margins(kind)) o.spec.margins = shared_margins;
    o.L = 10;
    o.trials = 100;
    o.seed = 77;
    o.score_scale = 0.5;  // keeps many hinges active
    const auto rows = topk::run_gradcheck(o);
    ASSERT_EQ(rows.size(), 100u);
    for (const auto& r : rows) {
      EXPECT_TRUE(r.passed) << topk::loss_name(kind) << " trial " << r.trial << " err " << r.max_abs_error;
      EXPECT_GT(r.kink_distance, o.kink_margin);
    }
  }
}

TEST(Gradcheck, RejectsLossWithoutGradient) {
  topk::GradcheckOptions o;
  o.spec.kind = LossKind::topk_01;
  EXPECT_THROW(topk::run_gradcheck(o), std::invalid_argument);
}

TEST(Gradcheck, KinkDistanceSeesExactTies) {
  topk::LossSpec spec;
  spec.kind = LossKind::cal_hinge;
  spec.k = 1;
  EXPECT_EQ(topk::kink_distance(spec, vec({0, 1, 1}), 0, nullptr), 0.0);
  spec.kind = LossKind::ce;
  EXPECT_TRUE(std::isinf(topk::kink_distance(spec, vec({0, 1, 1}), 0, nullptr)));
}

// ---------------------------------------------------------------------------
// Global properties

TEST(LossProperties, NonnegativeAndFinite) {
  std::mt19937_64 rng(31);
  const auto margins = std::make_shared<const topk::MarginTable>(topk::MarginTable({100, 50, 20, 10, 5, 1}, 0.3));
  for (int t = 0; t < 10000; ++t) {
    const Index L = 6;
    const VectorXd s = oracle::gaussian(rng, L, 1.0 + static_cast<double>(t % 5));
    const Index y = static_cast<Index>(rng() % 6);
    const auto z = topk::sample_noise(L, 3, rng());
    for (LossKind kind : topk::all_loss_kinds()) {
      topk::LossSpec spec;
      spec.kind = kind;
      spec.k = 1 + t % 4;
      spec.margins = margins;
      const auto e = topk::evaluate_loss(spec, s, y, &z);
      ASSERT_GE(e.value, 0.0) << topk::loss_name(kind);
      ASSERT_TRUE(std::isfinite(e.value));
      if (topk::has_gradient(kind)) {
        ASSERT_EQ(e.grad.size(), L);
        ASSERT_TRUE(e.grad.allFinite());
      }
    }
  }
}

TEST(LossProperties, HingeZeroRegion) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 500; ++t) {
    const Index L = 3 + static_cast<Index>(rng() % 8);
    const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(L - 1));
    const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
    VectorXd s = oracle::gaussian(rng, L);
    const auto z = topk::sample_noise(L, 3, rng());
    const topk::MarginTable m = topk::MarginTable::uniform(L, 0.7);
    // With s_y on top, the reference statistics ignore s_y; put s_y just past
    // the largest threshold and confirm the references did not move.
    VectorXd inside = s;
    inside(y) = s.maxCoeff() + 10.0;
    const double ref_cal = topk::top_k(inside, k + 1), ref_noise = topk::mc_top(inside, k + 1, 0.4, z);
    inside(y) = std::max(1.0 + ref_cal, 1.0 + ref_noise) + 1e-9;
    if (topk::top_k(inside, k + 1) != ref_cal || topk::mc_top(inside, k + 1, 0.4, z) != ref_noise) continue;
    for (const auto& e : {topk::loss_cal_hinge_topk(inside, y, k), topk::loss_hinge_topk(inside, y, k),
                          topk::loss_noised_balanced(inside, y, k, 0.4, z),
                          topk::loss_noised_imbalanced(inside, y, k, 0.4, z, m)}) {
      EXPECT_EQ(e.value, 0.0);
      EXPECT_EQ(e.grad, VectorXd::Zero(L));
    }
  }
}

TEST(LossProperties, CvxHingeUpperBoundsHinge) {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 1000; ++t) {
    const Index L = 2 + static_cast<Index>(rng() % 10);
    const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(L - 1));
    const Index y = static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
    const VectorXd s = oracle::gaussian(rng, L, 1.5);
    EXPECT_GE(topk::loss_cvx_hinge_topk(s, y, k).value, topk::loss_hinge_topk(s, y, k).value - 1e-12);
  }
}

TEST(Dispatch, NamesRoundTrip) {
  for (LossKind kind : topk::all_loss_kinds()) EXPECT_EQ(topk::parse_loss_kind(topk::loss_name(kind)), kind);
  EXPECT_THROW(topk::parse_loss_kind("nope"), std::invalid_argument);
  topk::LossSpec spec;
  spec.kind = LossKind::noised_balanced;
  EXPECT_THROW(topk::evaluate_loss(spec, vec({0, 1, 2}), 0, nullptr), std::invalid_argument);
  spec.kind = LossKind::ldam;
  EXPECT_THROW(topk::evaluate_loss(spec, vec({0, 1, 2}), 0, nullptr), std::invalid_argument);
}
