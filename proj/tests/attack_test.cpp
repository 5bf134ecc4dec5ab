#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "rmc/attack.hpp"
#include "test_util.hpp"

using namespace rmc;
using rmc::testing::l1_projection_oracle;
using rmc::testing::random_inputs;
using rmc::testing::random_model;

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();
const DomainBox kNoBox{-kInf, kInf};

AttackSpec spec_of(Norm p, Real delta) { return AttackSpec{p, delta, 10, 2 * delta / 10, 1}; }

}  // namespace

TEST(SteepestStep, WorkedExamples) {
  const std::vector<Real> g{0.3, -2.0};
  EXPECT_EQ(steepest_step(g, AttackSpec{Norm::linf, 1.0, 1, 0.1, 1}), (std::vector<Real>{0.1, -0.1}));
  const auto l2 = steepest_step(std::vector<Real>{3.0, 4.0}, AttackSpec{Norm::l2, 1.0, 1, 1.0, 1});
  EXPECT_NEAR(l2[0], 0.6, 1e-15);
  EXPECT_NEAR(l2[1], 0.8, 1e-15);
  EXPECT_EQ(steepest_step(g, AttackSpec{Norm::l1, 1.0, 1, 0.5, 1}), (std::vector<Real>{0.0, -0.5}));

  AttackSpec s{Norm::l1, 1.0, 1, 0.1, 1};
  // Ties go to the lower index.
  EXPECT_EQ(steepest_step(std::vector<Real>{1.0, -1.0}, s), (std::vector<Real>{0.1, 0.0}));
  s.l1_k = 2;
  EXPECT_EQ(steepest_step(std::vector<Real>{0.5, -2.0, 0.0}, s), (std::vector<Real>{0.05, -0.05, 0.0}));
  // Zero gradient never moves.
  for (Norm p : {Norm::linf, Norm::l2, Norm::l1}) {
    s.p = p;
    for (Real v : steepest_step(std::vector<Real>(4, 0.0), s)) EXPECT_EQ(v, 0.0);
  }
}

TEST(Project, WorkedExamples) {
  const std::vector<Real> mid{0.5, 0.5};
  auto pr = [&](std::vector<Real> e, Norm p, Real d) { return project(e, mid, spec_of(p, d), kNoBox); };
  EXPECT_EQ(pr({0.5, -0.3}, Norm::linf, 0.2), (std::vector<Real>{0.2, -0.2}));
  const auto l2 = pr({3.0, 4.0}, Norm::l2, 1.0);
  EXPECT_NEAR(l2[0], 0.6, 1e-15);
  EXPECT_NEAR(l2[1], 0.8, 1e-15);
  EXPECT_EQ(pr({3.0, 1.0}, Norm::l1, 2.0), (std::vector<Real>{2.0, 0.0}));
  EXPECT_EQ(pr({1.0, -1.0}, Norm::l1, 1.0), (std::vector<Real>{0.5, -0.5}));
  // Already inside: untouched.
  EXPECT_EQ(pr({0.5, -0.5}, Norm::l1, 2.0), (std::vector<Real>{0.5, -0.5}));
  EXPECT_THROW(project(std::vector<Real>{0.1}, mid, spec_of(Norm::l2, 1.0)), std::exception);
}

TEST(Project, BoxClamp) {
  const std::vector<Real> x{0.95, 0.02};
  const auto e = project(std::vector<Real>{0.1, -0.1}, x, spec_of(Norm::linf, 0.2));
  EXPECT_NEAR(x[0] + e[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1] + e[1], 0.0, 1e-15);
}

TEST(Project, L1MatchesSupportEnumerationOracle) {
  RngStream rng(2024);
  Real worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + trial % 9;
    std::vector<Real> v(d);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    const Real r = rng.uniform(0.01, 1.5);
    const auto want = l1_projection_oracle(v, r);
    std::vector<Real> got = v;
    detail::project_l1_ball(got, r);
    ASSERT_EQ(want.size(), d);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    const auto via_project = project(v, std::vector<Real>(d, 0.0), spec_of(Norm::l1, r), kNoBox);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(via_project[i] - want[i]));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Project, IdempotentAndFeasible) {
  RngStream rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const Norm p = static_cast<Norm>(trial % 3);
    const std::size_t d = 1 + rng.index(12);
    std::vector<Real> x(d), e(d);
    for (auto& v : x) v = rng.uniform();
    for (auto& v : e) v = rng.uniform(-1.0, 1.0);
    const auto spec = spec_of(p, rng.uniform(0.01, 0.8));
    const auto once = project(e, x, spec);
    const auto twice = project(once, x, spec);
    EXPECT_LE(lp_norm(once, p), spec.delta + 1e-12);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_NEAR(once[i], twice[i], 1e-12);
      EXPECT_GE(x[i] + once[i], 0.0);
      EXPECT_LE(x[i] + once[i], 1.0);
    }
  }
}

TEST(Pgd, ZeroBudgetOrZeroStepsReturnsInput) {
  const auto p = random_model(ArchSpec::mlp({4, 8, 3}), 1);
  RngStream rng(2);
  const Tensor x = random_inputs(5, 4, rng);
  const std::vector<Label> y{0, 1, 2, 0, 1};
  for (Norm n : {Norm::linf, Norm::l2, Norm::l1}) {
    EXPECT_EQ(pgd_attack(p, x, y, AttackSpec::make(n, 0.0, 10)), x);
    EXPECT_EQ(pgd_attack(p, x, y, AttackSpec::make(n, 0.3, 0)), x);
  }
}

TEST(Pgd, LinearBinaryModelHitsClosedFormOptimum) {
  // For a linear two-class model the loss gradient direction is fixed
  // (w_other - w_label), so the optimum over each ball is known exactly.
  const ArchSpec arch = ArchSpec::mlp({3, 2});
  const ModelParams p{arch, Tensor::vector({0.4, -0.9, 0.1, -0.2, 0.3, 0.6, 0.0, 0.0})};
  const Tensor x({1, 3}, std::vector<Real>{0.5, 0.5, 0.5});
  const std::vector<Label> y{0};
  const std::vector<Real> u{-0.6, 1.2, 0.5};  // w1 - w0
  const Real n2 = std::sqrt(0.36 + 1.44 + 0.25);
  const Real d = 0.1;

  const Tensor a_inf = pgd_attack(p, x, y, AttackSpec::make(Norm::linf, d, 10));
  const Tensor a_2 = pgd_attack(p, x, y, AttackSpec::make(Norm::l2, d, 10));
  const Tensor a_1 = pgd_attack(p, x, y, AttackSpec::make(Norm::l1, d, 10));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(a_inf[i] - 0.5, d * (u[i] > 0 ? 1 : -1), 1e-12);
    EXPECT_NEAR(a_2[i] - 0.5, d * u[i] / n2, 1e-12);
    EXPECT_NEAR(a_1[i] - 0.5, i == 1 ? d : 0.0, 1e-12);
  }
}

TEST(Pgd, SingleTinyL2StepIncreasesLossToFirstOrder) {
  const auto p = random_model(ArchSpec::mlp({5, 10, 3}), 3);
  RngStream rng(4);
  const Tensor x = random_inputs(1, 5, rng);
  const std::vector<Label> y{2};
  const AttackSpec s{Norm::l2, 1.0, 1, 1e-6, 1};
  const Tensor adv = pgd_attack(p, x, y, s);
  const Real gain = sample_losses(p, adv, y)[0] - sample_losses(p, x, y)[0];
  const Real g = lp_norm(input_grad(p, x, y), Norm::l2);
  EXPECT_NEAR(gain / (1e-6 * g), 1.0, 1e-3);
}

TEST(Pgd, SingleL2StepHasLengthMinAlphaDelta) {
  const auto p = random_model(ArchSpec::mlp({5, 10, 3}), 14);
  RngStream rng(15);
  const Tensor x = random_inputs(1, 5, rng);
  const std::vector<Label> y{1};
  for (Real alpha : {1e-4, 1e-3}) {
    for (Real delta : {5e-4, 1.0}) {
      const Tensor adv = pgd_attack(p, x, y, AttackSpec{Norm::l2, delta, 1, alpha, 1});
      std::vector<Real> e(5);
      for (std::size_t i = 0; i < 5; ++i) e[i] = adv[i] - x[i];
      EXPECT_NEAR(lp_norm(e, Norm::l2), std::min(alpha, delta), 1e-15);
    }
  }
}

TEST(Pgd, StaysFeasibleAndDoesNotDecreaseLoss) {
  const auto p = random_model(ArchSpec::mlp({6, 16, 3}), 5);
  RngStream rng(6);
  const Tensor x = random_inputs(20, 6, rng);
  std::vector<Label> y(20);
  for (auto& l : y) l = static_cast<Label>(rng.index(3));
  for (Norm n : {Norm::linf, Norm::l2, Norm::l1}) {
    const auto spec = AttackSpec::make(n, n == Norm::linf ? 0.05 : (n == Norm::l2 ? 0.2 : 0.6), 20);
    const Tensor adv = pgd_attack(p, x, y, spec);
    const auto clean = sample_losses(p, x, y), attacked = sample_losses(p, adv, y);
    Real sum_c = 0, sum_a = 0;
    for (std::size_t r = 0; r < 20; ++r) {
      std::vector<Real> e(6);
      for (std::size_t i = 0; i < 6; ++i) {
        e[i] = adv[r * 6 + i] - x[r * 6 + i];
        EXPECT_GE(adv[r * 6 + i], 0.0);
        EXPECT_LE(adv[r * 6 + i], 1.0);
      }
      EXPECT_LE(lp_norm(e, n), spec.delta + 1e-12);
      sum_c += clean[r];
      sum_a += attacked[r];
    }
    EXPECT_GT(sum_a, sum_c);
  }
}

TEST(Msd, StepKeepsLargestLossCandidate) {
  const auto p = random_model(ArchSpec::mlp({6, 12, 3}), 8);
  RngStream rng(9);
  const std::vector<AttackSpec> specs{AttackSpec::make(Norm::linf, 0.05, 10), AttackSpec::make(Norm::l2, 0.2, 10),
                                      AttackSpec::make(Norm::l1, 0.6, 10)};
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_inputs(8, 6, rng);
    std::vector<Label> y(8);
    for (auto& l : y) l = static_cast<Label>(rng.index(3));
    // Start from a random feasible l_inf point.
    Tensor eps({8, 6});
    for (auto& v : eps.values()) v = rng.uniform(-0.02, 0.02);
    eps = project(eps, x, specs[0]);

    const auto st = msd_step(p, x, y, eps, specs);
    Tensor xe = x;
    for (std::size_t i = 0; i < xe.size(); ++i) xe[i] += eps[i];
    const Tensor g = input_grad(p, xe, y);
    for (std::size_t r = 0; r < 8; ++r) {
      std::size_t best = 0;
      Real best_loss = -kInf;
      std::vector<Real> best_row;
      for (std::size_t k = 0; k < specs.size(); ++k) {
        auto step = steepest_step(g.row(r), specs[k]);
        for (std::size_t i = 0; i < 6; ++i) step[i] += eps.row(r)[i];
        const auto cand = project(step, x.row(r), specs[k]);
        Tensor one({1, 6});
        for (std::size_t i = 0; i < 6; ++i) one[i] = x.row(r)[i] + cand[i];
        const Real loss = sample_losses(p, one, std::vector<Label>{y[r]})[0];
        if (loss > best_loss) {
          best_loss = loss;
          best = k;
          best_row = cand;
        }
      }
      EXPECT_EQ(st.chosen[r], best);
      for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(st.next_eps.row(r)[i], best_row[i]);
    }
  }
}

TEST(Msd, LinearLossPrefersLargerLinfGain) {
  // Gradient direction is the fixed u = w1 - w0; the l_inf candidate gains
  // delta_inf * |u|_1 = 0.23 against the l2 candidate's 0.01 * |u|_2, so it
  // wins every step.
  const ModelParams p{ArchSpec::mlp({3, 2}), Tensor::vector({0.4, -0.9, 0.1, -0.2, 0.3, 0.6, 0.0, 0.0})};
  const Tensor x({2, 3}, std::vector<Real>{0.5, 0.5, 0.5, 0.4, 0.6, 0.3});
  const std::vector<Label> y{0, 0};
  const std::vector<AttackSpec> specs{AttackSpec::make(Norm::linf, 0.1, 10), AttackSpec::make(Norm::l2, 0.01, 10)};
  Tensor eps(x.shape(), 0.0);
  for (int j = 0; j < 10; ++j) {
    const auto st = msd_step(p, x, y, eps, specs);
    for (std::size_t r = 0; r < 2; ++r) {
      EXPECT_GT(st.losses[0][r], st.losses[1][r]);
      EXPECT_EQ(st.chosen[r], 0u);
    }
    EXPECT_EQ(st.next_eps, st.candidates[0]);
    eps = st.next_eps;
  }
  EXPECT_THROW(msd_attack(p, x, y, std::vector<AttackSpec>{}), std::exception);
}

TEST(Msd, SingleSpecIsPgdBitForBit) {
  const auto p = random_model(ArchSpec::mlp({6, 12, 3}), 10);
  RngStream rng(11);
  const Tensor x = random_inputs(16, 6, rng);
  std::vector<Label> y(16);
  for (auto& l : y) l = static_cast<Label>(rng.index(3));
  for (Norm n : {Norm::linf, Norm::l2, Norm::l1}) {
    const std::vector<AttackSpec> one{AttackSpec::make(n, 0.2, 10)};
    Tensor eps(x.shape(), 0.0);
    for (int j = 0; j < one[0].steps; ++j) eps = msd_step(p, x, y, eps, one).next_eps;
    Tensor manual = x;
    for (std::size_t i = 0; i < manual.size(); ++i) manual[i] += eps[i];
    const Tensor pgd = pgd_attack(p, x, y, one[0]);
    EXPECT_EQ(manual, pgd);
    EXPECT_EQ(msd_attack(p, x, y, one), pgd);
  }
}

TEST(Msd, AttackRunsMaxStepsAndStaysInUnion) {
  const auto p = random_model(ArchSpec::mlp({6, 12, 3}), 12);
  RngStream rng(13);
  const Tensor x = random_inputs(10, 6, rng);
  std::vector<Label> y(10);
  for (auto& l : y) l = static_cast<Label>(rng.index(3));
  const std::vector<AttackSpec> specs{AttackSpec::make(Norm::linf, 0.05, 4), AttackSpec::make(Norm::l2, 0.2, 7)};
  Tensor eps(x.shape(), 0.0);
  for (int j = 0; j < 7; ++j) eps = msd_step(p, x, y, eps, specs).next_eps;
  const Tensor adv = msd_attack(p, x, y, specs);
  for (std::size_t i = 0; i < adv.size(); ++i) EXPECT_EQ(adv[i], x[i] + eps[i]);
  for (std::size_t r = 0; r < 10; ++r) {
    const auto e = eps.row(r);
    EXPECT_TRUE(lp_norm(e, Norm::linf) <= 0.05 + 1e-12 || lp_norm(e, Norm::l2) <= 0.2 + 1e-12);
  }
}
