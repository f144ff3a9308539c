#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

#include "linkrate/overhead_rate.hpp"
#include "test_support.hpp"

using namespace linkrate;

namespace {

// r_j^(m) by enumerating the paths of m independent stationary links over
// times t-j..t: P[all open at t-j, never all open in between | all open at t].
double brute_force_rjm(const LinkParams& p, int j, int m) {
  const auto [up, down] = stationary(p);
  const int steps = j + 1;
  const int bits = m * steps;
  double joint = 0.0;
  for (std::uint64_t a = 0; a < (std::uint64_t{1} << bits); ++a) {
    double prob = 1.0;
    for (int link = 0; link < m; ++link) {
      int prev = static_cast<int>((a >> (link * steps)) & 1U);
      prob *= prev ? up : down;
      for (int k = 1; k < steps; ++k) {
        const int cur = static_cast<int>((a >> (link * steps + k)) & 1U);
        prob *= prev ? (cur ? 1.0 - p.d() : p.d()) : (cur ? p.u() : 1.0 - p.u());
        prev = cur;
      }
    }
    const auto all_open = [&](int k) {
      for (int link = 0; link < m; ++link)
        if (((a >> (link * steps + k)) & 1U) == 0) return false;
      return true;
    };
    if (!all_open(0) || !all_open(j)) continue;
    bool blocked = false;
    for (int k = 1; k < j && !blocked; ++k) blocked = all_open(k);
    if (!blocked) joint += prob;
  }
  return joint / std::pow(up, m);
}

}  // namespace

TEST(RjM, Examples) {
  EXPECT_EQ(rj_m(LinkParams(0.3, 0.1), 1, 0), 1.0);
  EXPECT_EQ(rj_m(LinkParams(0.7, 0.2), 1, 0), 1.0);
  EXPECT_EQ(rj_m(LinkParams(0.7, 0.2), 3, 0), 0.0);
  EXPECT_NEAR(rj_m(LinkParams(0.3, 0.1), 1, 2), 0.81, 1e-15);
  EXPECT_NEAR(rj_m(LinkParams(0.3, 0.1), 2, 1), 0.03, 1e-15);
  EXPECT_THROW(rj_m(LinkParams(0.3, 0.1), 0, 1), DomainError);
  EXPECT_THROW(rj_m(LinkParams(0.3, 0.1), 1, -1), DomainError);
}

TEST(RjM, MatchesPathEnumeration) {
  for (const auto& p : {LinkParams(0.3, 0.1), LinkParams(0.9, 0.9), LinkParams(0.15, 0.55)}) {
    for (int m = 0; m <= 3; ++m) {
      for (int j = 1; j <= 4; ++j) {
        EXPECT_NEAR(rj_m(p, j, m), brute_force_rjm(p, j, m), 1e-13)
            << "u=" << p.u() << " d=" << p.d() << " j=" << j << " m=" << m;
      }
    }
  }
}

TEST(RjM, ConvolutionIdentity) {
  for (const auto& p : test_support::parameter_grid()) {
    for (int m = 0; m <= 6; ++m) {
      for (int j = 1; j <= 10; ++j) {
        const auto q = [&](int k) { return std::pow(stay_up_probability(p, k), m); };
        double rhs = 0.0;
        for (int i = 1; i <= j; ++i) rhs += q(j - i) * rj_m(p, i, m);
        ASSERT_NEAR(q(j), rhs, 1e-10) << "u=" << p.u() << " d=" << p.d() << " j=" << j << " m=" << m;
      }
    }
  }
}

TEST(RjM, StaysInRangeNearDegenerateParameters) {
  const LinkParams p(0.02, 0.001);
  for (long m : {1L, 10L, 100L, 1000L}) {
    for (int j : {1, 8, 32, 64}) {
      const double v = rj_m(p, j, m);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Rj, Examples) {
  auto r = rj(LinkParams(0.5, 0.5), 1, 1e-12);
  EXPECT_NEAR(r.value, 2.0 / 3.0, 1e-12);
  EXPECT_LT(r.residual, 1e-12);
  EXPECT_GT(r.m_used, 0);

  r = rj(LinkParams(0.5, 0.5), 2, 1e-12);
  EXPECT_NEAR(r.value, 2.0 / 21.0, 1e-12);

  const LinkParams p(0.3, 0.1);
  EXPECT_NEAR(rj(p, 3, 1e-12).value, rj_closed_form(p, 3), 1e-10);
}

TEST(Rj, TruncationResidualIsGeometricTail) {
  const LinkParams p(0.3, 0.1);
  for (double tol : {1e-3, 1e-8, 1e-12}) {
    const RjTable table(p, 4, RjOptions{.tol = tol});
    for (int j = 1; j <= 4; ++j) {
      EXPECT_LT(table.residual(j), tol);
      EXPECT_NEAR(table.residual(j), std::pow(0.75, table.m_truncation(j) + 1), 1e-15);
      EXPECT_LE(std::abs(table.r(j) - RjTable(p, 4).r(j)), tol + 1e-15);
    }
  }
  EXPECT_THROW(RjTable(p, 3, RjOptions{.tol = 0.0}), DomainError);
  EXPECT_THROW(RjTable(LinkParams(0.9, 1e-7), 3), DomainError);
}

TEST(RjClosedForm, Examples) {
  EXPECT_NEAR(rj_closed_form(LinkParams(0.5, 0.5), 1), 2.0 / 3.0, 1e-15);
  // D [1/(1 - 0.84 U) - 1/(1 - 0.81 U)] with U = 0.75, D = 0.25
  const double expected = 0.25 * (1.0 / (1.0 - 0.84 * 0.75) - 1.0 / (1.0 - 0.81 * 0.75));
  EXPECT_NEAR(rj_closed_form(LinkParams(0.3, 0.1), 2), expected, 1e-15);
  const LinkParams near_half(0.5 + 1e-3, 0.5 - 2e-3);
  EXPECT_NEAR(rj_closed_form(near_half, 3), rj(near_half, 3).value, 1e-10);
  EXPECT_THROW(rj_closed_form(LinkParams(0.3, 0.1), 4), UnsupportedError);
}

TEST(RjClosedForm, AgreesWithRecursionOnGrid) {
  for (const auto& p : test_support::parameter_grid()) {
    const RjTable table(p, 3);
    for (int j = 1; j <= 3; ++j)
      ASSERT_NEAR(table.r(j), rj_closed_form(p, j), 1e-10) << "u=" << p.u() << " d=" << p.d() << " j=" << j;
  }
}

TEST(RjTable, PartialSumsAndRecordProbabilities) {
  for (const auto& p : test_support::parameter_grid()) {
    const RjTable table(p, 60);
    EXPECT_EQ(table.p(0), 1.0);
    double sum = 0.0;
    for (int j = 1; j <= 60; ++j) {
      ASSERT_GE(table.r(j), 0.0);
      sum += table.r(j);
      ASSERT_LE(sum, 1.0 + 1e-12);
      ASSERT_NEAR(table.p(j), 1.0 - sum, 1e-12);
      ASSERT_GE(table.p(j), -1e-12);
      ASSERT_LE(table.p(j), table.p(j - 1));
    }
  }
  EXPECT_THROW(RjTable(LinkParams(0.3, 0.1), 4).r(5), DomainError);
  EXPECT_THROW(RjTable(LinkParams(0.3, 0.1), 0), DomainError);
}

TEST(Bounds, Examples) {
  const auto half = bounds(LinkParams(0.5, 0.5), 40);
  for (int j = 1; j <= 40; ++j) {
    EXPECT_DOUBLE_EQ(half.lower(j), 2.0);
    EXPECT_DOUBLE_EQ(half.upper(j), 2.0);
  }

  const auto b = bounds(LinkParams(0.3, 0.1), 4);
  EXPECT_NEAR(b.lower(1), 2.2882776799985365, 1e-13);
  EXPECT_NEAR(b.upper(1), 3.2451124978365313, 1e-13);
  EXPECT_LE(b.lower(4), b.upper(4));
  EXPECT_LT(b.gap(4), b.gap(1));
  EXPECT_THROW(bounds(LinkParams(0.3, 0.1), 0), DomainError);
}

TEST(Bounds, BracketingOnGrid) {
  for (const auto& p : test_support::parameter_grid()) {
    const auto b = bounds(p, 41);
    for (int j = 1; j <= 40; ++j) {
      ASSERT_LE(b.lower(j), b.lower(j + 1) + 1e-12) << "u=" << p.u() << " d=" << p.d() << " j=" << j;
      ASSERT_LE(b.upper(j + 1), b.upper(j) + 1e-12) << "u=" << p.u() << " d=" << p.d() << " j=" << j;
      ASSERT_LE(b.lower(j), b.upper(j) + 1e-12) << "u=" << p.u() << " d=" << p.d() << " j=" << j;
      ASSERT_NEAR(b.gap(j), b.upper(j) - b.lower(j), 1e-12);
    }
  }
}

TEST(Bounds, SeriesMatchesRecursionOnGrid) {
  for (const auto& p : test_support::parameter_grid()) {
    const auto b = bounds(p, 31);
    for (int j = 1; j <= 30; ++j)
      ASSERT_NEAR(b.lower(j), unrolled_lower_bound(b, j), 1e-10) << "u=" << p.u() << " d=" << p.d();
  }
}

TEST(Bounds, ExactWhenUpPlusDownIsOne) {
  for (double u : {0.05, 0.2, 0.5, 0.77, 0.95}) {
    const LinkParams p(u, 1.0 - u);
    const auto b = bounds(p, 40);
    const double exact = link_entropy(p) / stationary(p).down;
    for (int j = 1; j <= 40; ++j) {
      EXPECT_NEAR(b.gap(j), 0.0, 1e-12);
      EXPECT_NEAR(b.lower(j), exact, 1e-12);
      EXPECT_NEAR(b.upper(j), exact, 1e-12);
    }
  }
}

TEST(Bounds, NatsScaleEveryEntry) {
  const auto bits = bounds(LinkParams(0.3, 0.1), 10);
  const auto nats = bounds(LinkParams(0.3, 0.1, EntropyBase::nats), 10);
  for (int j = 1; j <= 10; ++j) {
    EXPECT_NEAR(nats.lower(j), bits.lower(j) * std::log(2.0), 1e-14);
    EXPECT_NEAR(nats.upper(j), bits.upper(j) * std::log(2.0), 1e-14);
  }
}

TEST(EntropyRate, Examples) {
  auto est = entropy_rate(LinkParams(0.5, 0.5), 1e-9);
  EXPECT_EQ(est.value, 2.0);
  EXPECT_EQ(est.half_width, 0.0);
  EXPECT_EQ(est.j_used, 1);
  EXPECT_TRUE(est.converged);

  est = entropy_rate(LinkParams(0.3, 0.1), 1e-6);
  EXPECT_TRUE(est.converged);
  EXPECT_LE(est.j_used, 30);
  EXPECT_LT(est.half_width, 1e-6);
  EXPECT_LE(est.lower, est.value);
  EXPECT_LE(est.value, est.upper);
  EXPECT_LE(est.identity_residual, 1e-10);

  est = entropy_rate(LinkParams(0.05, 0.05), 1e-10, 20);
  EXPECT_FALSE(est.converged);
  EXPECT_EQ(est.j_used, 20);
  EXPECT_GT(est.half_width, 1e-10);

  EXPECT_THROW(entropy_rate(LinkParams(0.3, 0.1), 0.0), DomainError);
}

TEST(EntropyRate, TighterTargetsNarrowTheSameBracket) {
  const LinkParams p(0.7, 0.2);
  const auto coarse = entropy_rate(p, 1e-3);
  const auto fine = entropy_rate(p, 1e-9);
  EXPECT_GE(fine.j_used, coarse.j_used);
  EXPECT_GE(fine.lower, coarse.lower - 1e-12);
  EXPECT_LE(fine.upper, coarse.upper + 1e-12);
  EXPECT_NEAR(fine.value, coarse.value, coarse.half_width + 1e-12);
}

TEST(ConvergenceFit, Examples) {
  for (const auto& [u, d] : {std::pair{0.3, 0.1}, std::pair{0.9, 0.9}, std::pair{0.05, 0.05}}) {
    const LinkParams p(u, d);
    const auto fit = convergence_fit(bounds(p, 40));
    const double log_lambda = std::log(std::abs(1.0 - u - d));
    EXPECT_FALSE(fit.exact);
    EXPECT_GE(fit.points, kMinFitPoints);
    EXPECT_LE(fit.slope, log_lambda + 0.05) << "u=" << u << " d=" << d;
    // The gap is quadratic in lambda^j near the stationary kernel.
    EXPECT_GE(fit.slope, 2.0 * log_lambda - 0.1) << "u=" << u << " d=" << d;
    EXPECT_GT(fit.c_fit, 0.0);
  }
  EXPECT_TRUE(convergence_fit(bounds(LinkParams(0.5, 0.5), 40)).exact);
  EXPECT_THROW(convergence_fit(bounds(LinkParams(0.2, 0.6), 40)), InsufficientDataError);
}
