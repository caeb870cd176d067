#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gpsurv/prob_bounds.hpp"

using namespace gpsurv;

namespace {
// the tail condition written out: 9 M^2 / (4 pi^4 h_d(t)^2) > log 2
bool tail_condition(int d, double M, double t) {
  double h = (d + 1) / (t + std::log(1 - std::exp(-t)));
  return 9 * M * M / (4 * std::pow(std::numbers::pi, 4) * h * h) > std::log(2.0);
}
}  // namespace

TEST(ProbBounds, TauStarExamples) {
  double t = tau_star(0, 1.0 / 6.0);
  EXPECT_NEAR(t, 32.9, 0.05);
  for (auto [d, M] : {std::pair{0, 1.0 / 6.0}, {0, 1.0}, {2, 0.5}, {1, 3.0}}) {
    double ts = tau_star(d, M);
    EXPECT_TRUE(tail_condition(d, M, ts + 1e-3)) << d << " " << M;
    if (ts - 1e-3 > 1) EXPECT_FALSE(tail_condition(d, M, ts - 1e-3)) << d << " " << M;
  }
  double big = tau_star(0, 10.0);
  EXPECT_GT(big, 1.0);
  EXPECT_LT(big, 1.5);
  EXPECT_LT(tau_star(0, 1.0), tau_star(1, 1.0));
  EXPECT_LT(tau_star(1, 1.0), tau_star(3, 1.0));
  EXPECT_THROW(tau_star(0, 0.0), DomainError);
}

TEST(ProbBounds, TailSeriesDecreasesInTauAndM) {
  auto v = [](double tau, double M) { return tail_bound_series({0, M, 1.0, tau, 200}).value; };
  EXPECT_GT(v(50, 1), v(60, 1));
  EXPECT_GT(v(60, 1), v(80, 1));
  EXPECT_GT(v(50, 1), v(50, 1.5));
  auto r = tail_bound_series({0, 1.0, 1.0, 50, 200});
  ASSERT_EQ(r.terms.size(), 201u);
  // far terms underflow to 0 in double; none may go negative
  EXPECT_GT(r.terms.front(), 0.0);
  for (double x : r.terms) EXPECT_GE(x, 0.0);
  EXPECT_GT(r.value, 0.0);
  EXPECT_LE(r.dropped_bound, r.terms.back());
  EXPECT_FALSE(r.truncation_note.empty());
}

TEST(ProbBounds, TailSeriesFirstTermByHand) {
  const double tau = 40, M = 1, k0 = 2;
  auto r = tail_bound_series({0, M, k0, tau, 5});
  double h = 1 / (tau + std::log(1 - std::exp(-tau)));
  double c0 = 9 * M * M / (4 * std::pow(std::numbers::pi, 4) * h * h) - std::log(2.0);
  double expect = 4 * std::exp(-M * M / (32 * k0 * h * h)) + 2 / (1 - std::exp(-c0)) * std::exp(-c0);
  EXPECT_NEAR(r.terms[0], expect, 1e-12 * expect);
}

TEST(ProbBounds, TailSeriesRequiresThreshold) {
  double ts = tau_star(0, 1.0);
  try {
    tail_bound_series({0, 1.0, 1.0, ts - 0.5, 200});
    FAIL() << "expected a precondition error";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("tau_star"), std::string::npos);
  }
}

TEST(ProbBounds, SmallBallPsiExample) {
  EXPECT_NEAR(small_ball_psi(0, 0.1, 2.0), 0.009730, 5e-6);
  double h2 = 1 / (2 + std::log(1 - std::exp(-2.0))), h1 = 1 / (1 + std::log(1 - std::exp(-1.0)));
  EXPECT_NEAR(small_ball_psi(0, 0.1, 2.0), 0.1 * h2 / (h1 * 3), 1e-15);
}

TEST(ProbBounds, SmallBallRangeAndMonotone) {
  auto k = StationaryKernel::se(5.0);
  double prev = 0;
  for (double delta : {2.0, 4.0, 8.0, 16.0, 32.0}) {
    auto r = small_ball_lower_bound(k, 0, delta, 1.5);
    EXPECT_GE(r.bound, 0.0);
    EXPECT_LE(r.bound, 1.0);
    EXPECT_GE(r.bound, prev);
    prev = r.bound;
  }
  EXPECT_TRUE(small_ball_lower_bound(k, 0, 8.0, 1.5).a1_holds);
}

TEST(ProbBounds, SmallBallNotConvergedGivesZero) {
  auto r = small_ball_lower_bound(StationaryKernel::se(5.0), 0, 0.1, 2.0);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.bound, 0.0);
  EXPECT_NE(r.diagnostic.find("not converged"), std::string::npos);
}

TEST(ProbBounds, SmallBallFlagsA1Failure) {
  auto r = small_ball_lower_bound(StationaryKernel::se(1.0), 0, 1.0, 1.5);
  EXPECT_FALSE(r.a1_holds);
  EXPECT_EQ(r.a1_failing.front(), 2);
  EXPECT_NE(r.diagnostic.find("A1"), std::string::npos);
}

TEST(ProbBounds, SmallBallBelowMonteCarlo) {
  const double delta = 1.0, tau = 1.5;
  auto k = StationaryKernel::se(1.0);
  auto r = small_ball_lower_bound(k, 0, delta, tau);
  auto mc = mc_event_probability(k, 0, false, {{0, tau, false, r.psi, Sense::at_most}}, tau, 8, 20000, 77);
  EXPECT_GE(mc.p_joint, r.bound - 3 * mc.se);
}

TEST(ProbBounds, TailBoundAboveMonteCarlo) {
  auto k = StationaryKernel::se(1.0);
  double tau = tau_star(0, 1.0) + 10;
  auto tb = tail_bound_series({0, 1.0, 1.0, tau, 200});
  auto mc = mc_event_probability(k, 0, true, {{tau, tau + 30, false, 1.0, Sense::at_least}}, tau + 30, 9, 2000, 5);
  EXPECT_LE(mc.p_joint, tb.value + tb.dropped_bound + 3 * mc.se);
}

TEST(ProbBounds, CentredEventBound) {
  auto k = StationaryKernel::se(5.0);
  double thr = tau_star(0, 1.0 / 6.0);
  EXPECT_THROW(centred_event_bound(k, 0, 1.0, thr - 1), PreconditionError);
  double prev_factor = 0, prev_value = INFINITY;
  for (double tau : {thr + 1, thr + 10, thr + 40, thr + 100}) {
    auto c = centred_event_bound(k, 0, 1.0, tau);
    EXPECT_GE(c.lower, 0.0);
    EXPECT_LE(c.lower, 1.0);
    EXPECT_LT(c.tail_value, prev_value);
    EXPECT_GE(c.tail_factor, prev_factor);
    prev_value = c.tail_value;
    prev_factor = c.tail_factor;
  }
  EXPECT_GT(prev_factor, 0.0);
}

TEST(ProbBounds, TauCProxyScansList) {
  auto k = StationaryKernel::se(5.0);
  double thr = tau_star(0, 1.0 / 6.0);
  // psi shrinks like 1/tau^2, so a very large delta is needed for a positive bound
  auto t = tau_c_proxy(k, 0, 1e5, {1.0, thr + 5, thr + 20, thr + 80});
  ASSERT_TRUE(t.has_value());
  EXPECT_GE(*t, thr);
  EXPECT_GT(centred_event_bound(k, 0, 1e5, *t).lower, 0.0);
  EXPECT_FALSE(tau_c_proxy(k, 0, 1e-3, {thr + 5}).has_value());
}

TEST(ProbBounds, BoundReportVerdicts) {
  auto up = BoundReport::make("tail", 0.1, 0.12, 0.01, true);
  EXPECT_TRUE(up.verdict);
  EXPECT_NEAR(up.ci, 0.0196, 1e-15);
  EXPECT_FALSE(BoundReport::make("tail", 0.1, 0.2, 0.01, true).verdict);
  EXPECT_TRUE(BoundReport::make("ball", 0.5, 0.48, 0.01, false).verdict);
  EXPECT_FALSE(BoundReport::make("ball", 0.5, 0.4, 0.01, false).verdict);
}
