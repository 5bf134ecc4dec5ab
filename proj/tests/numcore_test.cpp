#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rmc/numcore.hpp"

using namespace rmc;

namespace {

// Textbook splitmix64 (Vigna), written out independently of the library.
std::uint64_t reference_splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TEST(LpNorm, WorkedVector) {
  const std::vector<Real> v{3.0, -4.0, 0.0};
  EXPECT_DOUBLE_EQ(lp_norm(v, Norm::linf), 4.0);
  EXPECT_DOUBLE_EQ(lp_norm(v, Norm::l2), 5.0);
  EXPECT_DOUBLE_EQ(lp_norm(v, Norm::l1), 7.0);
}

TEST(LpNorm, ZeroVectorAndOrdering) {
  EXPECT_EQ(lp_norm(std::vector<Real>(5, 0.0), Norm::l2), 0.0);
  RngStream rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Real> v(1 + rng.index(9));
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    const Real a = lp_norm(v, Norm::linf), b = lp_norm(v, Norm::l2), c = lp_norm(v, Norm::l1);
    EXPECT_LE(a, b + 1e-12);
    EXPECT_LE(b, c + 1e-12);
    // Homogeneity.
    std::vector<Real> w = v;
    for (auto& x : w) x *= -2.5;
    EXPECT_NEAR(lp_norm(w, Norm::l2), 2.5 * b, 1e-12);
  }
}

TEST(LpNorm, EmptyRejected) { EXPECT_THROW(lp_norm(std::vector<Real>{}, Norm::l1), std::exception); }

TEST(NormNames, RoundTripAndUnknown) {
  for (Norm p : {Norm::linf, Norm::l2, Norm::l1}) EXPECT_EQ(parse_norm(norm_name(p)), p);
  try {
    parse_norm("l7");
    FAIL() << "expected a throw";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("l7"), std::string::npos);
  }
}

TEST(Rng, MatchesReferenceSplitmix) {
  RngStream a(0);
  EXPECT_EQ(a.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(a.next_u64(), 0x6e789e6aa1b965f4ULL);
  for (std::uint64_t seed : {1ULL, 42ULL, 0xdeadbeefULL}) {
    RngStream r(seed);
    std::uint64_t s = seed;
    for (int i = 0; i < 100; ++i) EXPECT_EQ(r.next_u64(), reference_splitmix(s));
  }
}

TEST(Rng, DeterministicAndInRange) {
  RngStream a = RngStream::derive(7, 3), b = RngStream::derive(7, 3), c = RngStream::derive(7, 4);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const Real u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    differs = differs || u != c.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformMomentsAndNormal) {
  RngStream r(5);
  const int n = 200000;
  Real s = 0, s2 = 0, ns = 0, ns2 = 0;
  for (int i = 0; i < n; ++i) {
    const Real u = r.uniform();
    s += u;
    s2 += u * u;
    const Real z = r.normal();
    ns += z;
    ns2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
  EXPECT_NEAR(ns / n, 0.0, 0.01);
  EXPECT_NEAR(ns2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  RngStream r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
  bool moved = false;
  for (int i = 0; i < 50; ++i) moved = moved || v[i] != i;
  EXPECT_TRUE(moved);
}

TEST(Tensor, ShapeAndRows) {
  Tensor t({2, 3}, std::vector<Real>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.row_size(), 3u);
  EXPECT_EQ(t.row(1)[0], 4.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), std::exception);
  EXPECT_TRUE(t.all_finite());
  t[0] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}
