#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "assessor/stats.hpp"

using namespace assessor;

namespace {

// Tie-free rank formula evaluated as one exact rational division.
double rank_formula(const std::vector<int>& pa, const std::vector<int>& pb) {
  const long long n = static_cast<long long>(pa.size());
  long long d2 = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) d2 += static_cast<long long>(pa[i] - pb[i]) * (pa[i] - pb[i]);
  const long long denom = n * (n * n - 1);
  return static_cast<double>(denom - 6 * d2) / static_cast<double>(denom);
}

std::vector<double> explicit_resample(std::span<const double> v, std::span<const std::uint32_t> counts) {
  std::vector<double> out;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::uint32_t c = 0; c < counts[i]; ++c) out.push_back(v[i]);
  return out;
}

}  // namespace

TEST(AverageRanks, SharesMeanPositionAcrossTies) {
  const std::vector<double> v{10, 20, 20, 5, 20};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 4, 4, 1, 4}));
}

TEST(Spearman, MatchesRankFormulaOnAllPermutations) {
  for (int n = 2; n <= 8; ++n) {
    std::vector<int> base(n);
    std::iota(base.begin(), base.end(), 1);
    std::vector<double> a(base.begin(), base.end());
    std::vector<int> perm = base;
    do {
      std::vector<double> b(perm.begin(), perm.end());
      ASSERT_EQ(spearman(a, b).rho, rank_formula(base, perm)) << "n=" << n;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(Spearman, TiedExample) {
  const std::vector<double> a{1, 2, 2, 3};
  const std::vector<double> b{1, 2, 3, 4};
  EXPECT_NEAR(spearman(a, b).rho, 0.948683, 1e-6);
}

TEST(Spearman, InvariantUnderMonotoneMaps) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  std::vector<double> a(300), b(300), fa(300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = z(rng);
    b[i] = a[i] + z(rng);
    fa[i] = std::exp(2.0 * a[i]) + 3.0;
  }
  EXPECT_EQ(spearman(a, b).rho, spearman(fa, b).rho);
  std::vector<double> neg(a.size());
  std::transform(a.begin(), a.end(), neg.begin(), [](double x) { return -x; });
  EXPECT_EQ(spearman(neg, b).rho, -spearman(a, b).rho);
}

TEST(Spearman, Errors) {
  const std::vector<double> a{1, 2, 3}, c{4, 4, 4}, s{1, 2};
  try {
    spearman(a, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateInput);
  }
  try {
    spearman(a, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Bootstrap, WeightedRanksMatchExplicitResample) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coarse(0, 6);  // forces ties
  std::normal_distribution<double> z;
  const std::size_t n = 60;
  std::vector<double> a(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = coarse(rng);
    t[i] = a[i] + z(rng);
  }
  const detail::ResampleRanker rank_a(a), rank_t(t);
  std::vector<std::uint32_t> counts(n);
  std::vector<double> ra(n), rt(n);
  for (std::uint64_t attempt = 0; attempt < 50; ++attempt) {
    detail::draw_counts(3, attempt, counts);
    ASSERT_GE(rank_a.rank(counts, ra), 2u);
    ASSERT_GE(rank_t.rank(counts, rt), 2u);
    const double fast = detail::weighted_rank_pearson(counts, ra, rt, (n + 1) / 2.0);
    const double naive = spearman(explicit_resample(a, counts), explicit_resample(t, counts)).rho;
    EXPECT_NEAR(fast, naive, 1e-12);
  }
}

TEST(Bootstrap, DeterministicForSeed) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::vector<double> p(100), t(100);
  for (std::size_t i = 0; i < p.size(); ++i) {
    t[i] = z(rng);
    p[i] = t[i] + z(rng);
  }
  const auto c1 = bootstrap_ci(p, t, 42);
  const auto c2 = bootstrap_ci(p, t, 42);
  EXPECT_EQ(c1.lo, c2.lo);
  EXPECT_EQ(c1.hi, c2.hi);
  EXPECT_LT(c1.lo, spearman(p, t).rho);
  EXPECT_GT(c1.hi, spearman(p, t).rho);
  EXPECT_EQ(c1.n_resamples, 1000);
}

TEST(Bootstrap, CoversPopulationValue) {
  // Gaussian pair with Pearson 0.8 has Spearman (6/pi) asin(0.4).
  const double truth_rho = 6.0 / std::numbers::pi * std::asin(0.4);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  int covered = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(200), t(200);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double u = z(rng), v = z(rng);
      t[i] = u;
      p[i] = 0.8 * u + 0.6 * v;
    }
    const auto ci = bootstrap_ci(p, t, 1000, 0.95, static_cast<std::uint64_t>(trial));
    if (ci.lo <= truth_rho && truth_rho <= ci.hi) ++covered;
  }
  EXPECT_GE(covered, 85);
}

TEST(Bootstrap, PairedIntervalsShareResamples) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::vector<double> p(80), t(80);
  for (std::size_t i = 0; i < p.size(); ++i) {
    t[i] = z(rng);
    p[i] = t[i] + 0.5 * z(rng);
  }
  const auto [a, b] = paired_bootstrap_ci(p, p, t, {}, 1);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
}

TEST(Bootstrap, Errors) {
  std::vector<double> t5{1, 2, 3, 4, 5};
  try {
    bootstrap_ci(t5, t5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateInput);
  }
  std::vector<double> c(20, 2.0), t20(20);
  std::iota(t20.begin(), t20.end(), 0.0);
  try {
    bootstrap_ci(c, t20, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateInput);
  }
}

TEST(Verdict, SeparatedIntervalsDecide) {
  const ConfidenceInterval hi{0.6, 0.8}, lo{0.2, 0.4}, mid{0.35, 0.65};
  EXPECT_EQ(verdict(hi, lo, 0.7, 0.3).outcome, Outcome::Win);
  EXPECT_DOUBLE_EQ(verdict(hi, lo, 0.7, 0.3).margin, 0.4);
  EXPECT_EQ(verdict(lo, hi, 0.3, 0.7).outcome, Outcome::Loss);
  EXPECT_DOUBLE_EQ(verdict(lo, hi, 0.3, 0.7).margin, -0.4);
  const auto tie = verdict(mid, hi, 0.5, 0.7);
  EXPECT_EQ(tie.outcome, Outcome::Tie);
  EXPECT_EQ(tie.margin, 0.0);
  const std::vector<Verdict> vs{{Outcome::Win, 0.1}, {Outcome::Win, 0.2}, {Outcome::Loss, -0.1}, {}};
  EXPECT_EQ(score_of(vs), 1);
}
