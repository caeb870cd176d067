#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gpsurv/kl_diagnostics.hpp"

using namespace gpsurv;

namespace {
const double kLn2 = std::log(2.0);

// theta0 with smooth random paths, theta inside B by construction
std::pair<Theta, Theta> b_set_pair(const BSetParams& p, std::uint64_t seed, double horizon = 40.0) {
  Rng rng = make_stream(seed);
  auto th0 = Theta::constant(1.0 + 2 * uniform01(rng), p.d, horizon, 9);
  for (auto& path : th0.paths) {
    double a = uniform01(rng) - 0.5, f = 0.5 + uniform01(rng);
    for (std::size_t k = 0; k < path.values.size(); ++k) path.values[k] = a * std::sin(f * path.grid.t(k));
  }
  Theta th = th0;
  th.omega = th0.omega * (1 + p.delta * (2 * uniform01(rng) - 1) * 0.99);
  const double radius = p.delta / (1 + p.tau);
  for (auto& path : th.paths) {
    double c = 0.7 * radius * (2 * uniform01(rng) - 1), s = 0.3 * radius * uniform01(rng);
    for (std::size_t k = 0; k < path.values.size(); ++k) {
      double t = path.grid.t(k);
      // |shift| <= radius on [0, tau], decaying afterwards
      double shift = c + s * std::sin(3 * t);
      path.values[k] += t <= p.tau ? shift : shift * std::exp(-(t - p.tau));
    }
  }
  return {th0, th};
}
}  // namespace

TEST(KlDiagnostics, UpsilonExponentialOracle) {
  auto th0 = Theta::constant(2.0, 0, 10.0, 6), th = Theta::constant(1.0, 0, 10.0, 6);
  EXPECT_NEAR(upsilon(th0, th, {}, 1.0), kLn2 - 0.5, 1e-10);
  EXPECT_NEAR(upsilon(th0, th, {}, 2.0), kLn2 - 1.0, 1e-10);
  EXPECT_EQ(upsilon(th0, th0, {}, 3.0), 0.0);
  EXPECT_THROW(upsilon(th0, th, {}, 11.0), DomainError);
}

TEST(KlDiagnostics, KlTermsExponentialOracle) {
  auto th0 = Theta::constant(2.0, 1, 40.0, 8), th = Theta::constant(1.0, 1, 40.0, 8);
  auto k = kl_terms(th0, th, {0.3});
  EXPECT_NEAR(k.K, kLn2 - 0.5, 1e-6);
  EXPECT_NEAR(k.V, 0.25, 1e-4);
  EXPECT_LT(k.tail_bound, 1e-5);
  auto z = kl_terms(th0, th0, {0.3});
  EXPECT_NEAR(z.K, 0.0, 1e-8);
  EXPECT_NEAR(z.V, 0.0, 1e-8);
}

TEST(KlDiagnostics, KlNonnegativeOnRandomPairs) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto [th0, th] = b_set_pair({0.3, 2.0, 1}, 100 + s);
    th.omega *= 1.5;
    for (auto& p : th.paths)
      for (auto& v : p.values) v += 0.4;
    EXPECT_GE(kl_terms(th0, th, {0.6}, {0, 4096}).K, -1e-6) << s;
  }
}

TEST(KlDiagnostics, AggregateRdAndNrd) {
  auto th0 = Theta::constant(2.0, 1, 40.0, 8), th = Theta::constant(1.0, 1, 40.0, 8);
  auto q = CovariateQuadrature::from_law(CovariateLaw::uniform(1), 8);
  QuadSpec quad{0, 4096};
  auto rd = kl_aggregate(th0, th, Design::RD, q, {}, quad);
  EXPECT_NEAR(rd.value, kLn2 - 0.5, 1e-6);
  for (double K : rd.per_x_K) EXPECT_NEAR(K, rd.per_x_K.front(), 1e-12);
  EXPECT_NEAR(kl_aggregate(th0, th0, Design::RD, q, {}, quad).value, 0.0, 1e-8);

  std::vector<Covariate> fixed;
  for (int i = 0; i < 1000; ++i) fixed.push_back({(i % 7) / 6.0});
  auto nrd = kl_aggregate(th0, th, Design::NRD, q, fixed, quad);
  EXPECT_NEAR(nrd.value, kLn2 - 0.5, 1e-6);
  double basel = 0.25 * std::numbers::pi * std::numbers::pi / 6;
  EXPECT_LE(basel - nrd.v_partial_sum, nrd.v_tail_bound + 1e-6);
  EXPECT_GE(basel - nrd.v_partial_sum, 0.0 - 1e-6);
  EXPECT_NEAR(nrd.v_tail_bound, 0.25 / 1000, 1e-6);
}

TEST(KlDiagnostics, VSeriesTailIsCauchy) {
  std::vector<double> V;
  Rng rng = make_stream(3);
  for (int i = 0; i < 4000; ++i) V.push_back(uniform01(rng));
  std::vector<double> head(V.begin(), V.begin() + 500);
  auto [full, _] = v_series(V);
  auto [part, tail] = v_series(head);
  EXPECT_LE(full - part, tail);
}

TEST(KlDiagnostics, BSetMembershipCases) {
  BSetParams p{0.1, 2.0, 1};
  auto th0 = Theta::constant(2.0, 1, 10.0, 6);
  EXPECT_TRUE(b_set_membership(th0, th0, p).member);

  auto far = th0;
  far.omega = 2.0 * (1 + 2 * p.delta);
  EXPECT_FALSE(b_set_membership(far, th0, p).omega_ok);

  auto edge = Theta::constant(2.0, 1, 10.0, 6, p.delta / (1 + p.tau));
  auto m = b_set_membership(edge, th0, p);
  EXPECT_TRUE(m.sup_ok[0] && m.sup_ok[1]);
  auto over = Theta::constant(2.0, 1, 10.0, 6, 1.01 * p.delta / (1 + p.tau));
  EXPECT_FALSE(b_set_membership(over, th0, p).member);

  auto sink = th0;
  for (std::size_t k = 0; k < sink.grid().size(); ++k)
    if (sink.grid().t(k) > 5) sink.paths[0].values[k] = -1e3;
  auto s = b_set_membership(sink, th0, p);
  EXPECT_FALSE(s.inf_ok[0]);
  EXPECT_TRUE(s.inf_ok[1]);
  EXPECT_TRUE(s.inf_truncated);

  EXPECT_THROW(b_set_membership(th0, th0, {0.1, 12.0, 1}), DomainError);
}

TEST(KlDiagnostics, LinkSupCheck) {
  BSetParams p{0.1, 1.0 + 1e-9, 1};  // tau must exceed 1
  auto th0 = Theta::constant(2.0, 1, 10.0, 6);
  auto same = link_sup_check(th0, th0, p, {{0.5}});
  EXPECT_EQ(same.max_sigma_gap, 0.0);
  EXPECT_TRUE(same.pass);
  auto shifted = Theta::constant(2.0, 1, 10.0, 6, 0.1 / (2.0 + 1e-9));
  auto r = link_sup_check(shifted, th0, p, {{1.0}});
  EXPECT_NEAR(r.bound, 0.1, 1e-9);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.max_logsigma_gap, 0.0);
  EXPECT_FALSE(r.vacuous);
  auto off = Theta::constant(2.0, 1, 10.0, 6, 0.2);
  EXPECT_TRUE(link_sup_check(off, th0, p, {{1.0}}).vacuous);
}

TEST(KlDiagnostics, LinkSupPassesOnRandomMembers) {
  int members = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    BSetParams p{s % 2 ? 0.05 : 0.1, s % 3 ? 2.0 : 5.0, 1 + int(s % 2)};
    auto [th0, th] = b_set_pair(p, s, 12.0);
    if (!b_set_membership(th, th0, p).member) continue;
    ++members;
    std::vector<Covariate> xs{{0.0, 0.0}, {1.0, 1.0}, {0.3, 0.8}};
    for (auto& x : xs) x.resize(p.d);
    EXPECT_TRUE(link_sup_check(th, th0, p, xs).pass) << s;
  }
  EXPECT_GT(members, 150);
}

TEST(KlDiagnostics, AnalyticBoundExamples) {
  auto b = analytic_kl_bounds({0.1, 1.000001, 1}, 2.0, {1.0, 0, 0, 2.0});
  EXPECT_NEAR(b.head_bound, 0.1 * (1 / 0.9 + 2 / 2.000001 + 4 + 2), 1e-12);
  EXPECT_NEAR(b.head_bound, 0.811111, 1e-5);
  EXPECT_NEAR(b.K0, std::max(std::abs(std::log(1.8)), std::abs(std::log(2.2))), 1e-15);
  EXPECT_EQ(b.tail_bound, 0.0);
  auto tiny = analytic_kl_bounds({1e-9, 2.0, 1}, 2.0, {1.0, 0, 0, 2.0});
  EXPECT_LT(tiny.head_bound, 1e-7);
  EXPECT_THROW(analytic_kl_bounds({0.1, 2.0, 1}, 2.0, {-1, 0, 0, 0}), DomainError);
}

TEST(KlDiagnostics, BoundChainOnRandomMembers) {
  int checked = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    BSetParams p{s % 2 ? 0.05 : 0.1, s % 4 < 2 ? 2.0 : 5.0, 1};
    auto [th0, th] = b_set_pair(p, 500 + s);
    if (!b_set_membership(th, th0, p).member) continue;
    Covariate x{(s % 5) / 4.0};
    auto kt = kl_terms(th0, th, x, {0, 4096});
    auto cm = conditional_moments(th0, x, p.tau, 4096);
    auto ab = analytic_kl_bounds(p, th0.omega, cm.m);
    EXPECT_LE(kt.K, ab.head_bound + ab.tail_bound + 1e-5) << s;
    EXPECT_LE(kt.V, ab.var_head_bound + ab.var_tail_bound + 1e-5) << s;
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(KlDiagnostics, ConditionalMomentsExponential) {
  auto th0 = Theta::constant(2.0, 0, 60.0, 10);
  auto cm = conditional_moments(th0, {}, 3.0);
  EXPECT_NEAR(cm.m.E_T, 1.0, 1e-6);
  EXPECT_NEAR(cm.m.E_T2, 2.0, 1e-6);
  EXPECT_NEAR(cm.m.E_T_tail, 4 * std::exp(-3.0), 1e-8);
  EXPECT_NEAR(cm.m.P_tail, std::exp(-3.0), 1e-10);
}

TEST(KlDiagnostics, MomentChecksExponential) {
  auto th0 = Theta::constant(2.0, 0, 60.0, 10);
  auto q = CovariateQuadrature::from_law(CovariateLaw::uniform(0));
  auto mc = moment_checks(th0, q, 10.0, 1.0);
  EXPECT_FALSE(mc.inconclusive);
  EXPECT_NEAR(mc.A3_estimate, 1.0, 1e-4);
  EXPECT_NEAR(mc.A3prime_worst, 122 * std::exp(-10.0), 1e-6);
  EXPECT_TRUE(mc.a3_pass && mc.a3prime_pass);
  ASSERT_EQ(mc.ladder.size(), 10u);
  for (auto [n, v] : mc.ladder) EXPECT_NEAR(v, (n + 1) * std::exp(-n), 1e-7) << n;
  EXPECT_TRUE(mc.ladder_decreasing);

  auto short_h = Theta::constant(2.0, 0, 5.0, 6);
  EXPECT_TRUE(moment_checks(short_h, q, 10.0, 1.0).inconclusive);
}
