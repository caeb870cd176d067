#include <gtest/gtest.h>

#include <cmath>

#include "gpsurv/kernels.hpp"

using namespace gpsurv;

namespace {
// A1 by hand: 1 / (k(0) - k(2^-n)) >= n^6, plain formulas
bool a1_se_by_hand(double ell, int n) {
  double t = std::ldexp(1.0, -n);
  return 1.0 / (-std::expm1(-t * t / (ell * ell))) >= std::pow(n, 6);
}
bool a1_ou_by_hand(double ell, int n) {
  double t = std::ldexp(1.0, -n);
  return 1.0 / (-std::expm1(-t / ell)) >= std::pow(n, 6);
}
StationaryKernel constant_kernel() { return StationaryKernel::tabulated({0.0, 1.0}, {1.0, 1.0}); }
}  // namespace

TEST(Kernels, ClosedFormValues) {
  auto se = StationaryKernel::se(2.0, 3.0);
  auto ou = StationaryKernel::ou(2.0, 3.0);
  EXPECT_DOUBLE_EQ(se(0), 3.0);
  EXPECT_NEAR(se(2.0), 3.0 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(ou(2.0), 3.0 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(eval(ou, 4.0), 3.0 * std::exp(-2.0), 1e-15);
  EXPECT_THROW(se(-1.0), DomainError);
  EXPECT_THROW(StationaryKernel::se(0.0), DomainError);
  EXPECT_THROW(StationaryKernel::ou(1.0, -1.0), DomainError);
  EXPECT_EQ(se.name(), "se");
  EXPECT_EQ(ou.name(), "ou");
}

TEST(Kernels, DecrementKeepsPrecisionAtTinyLags) {
  auto se = StationaryKernel::se(1.0);
  // 1 - exp(-x) ~ x for x = 1e-20; a naive difference would give 0
  EXPECT_NEAR(se.decrement(1e-10) / 1e-20, 1.0, 1e-12);
  auto ou = StationaryKernel::ou(1.0);
  EXPECT_NEAR(ou.decrement(1e-12) / 1e-12, 1.0, 1e-11);
}

TEST(Kernels, TabulatedInterpolatesAndHolds) {
  auto k = StationaryKernel::tabulated({0, 1, 2}, {1.0, 0.5, 0.25});
  EXPECT_DOUBLE_EQ(k(0.5), 0.75);
  EXPECT_DOUBLE_EQ(k(1.5), 0.375);
  EXPECT_DOUBLE_EQ(k(10.0), 0.25);
  EXPECT_DOUBLE_EQ(k.decrement(1.0), 0.5);
  EXPECT_THROW(StationaryKernel::tabulated({0.1, 1}, {1, 0.5}), DomainError);
  EXPECT_THROW(StationaryKernel::tabulated({0, 1}, {1, 1.5}), DomainError);
  EXPECT_THROW(StationaryKernel::tabulated({0, 1, 1}, {1, 0.5, 0.4}), DomainError);
}

TEST(Kernels, LoadTabulatedFromCsv) {
  auto k = load_tabulated_kernel(std::string(GPSURV_TEST_DATA) + "/kernel_table.csv");
  EXPECT_DOUBLE_EQ(k(0.25), 0.9);
  EXPECT_DOUBLE_EQ(k(3.0), 0.05);
  EXPECT_THROW(load_tabulated_kernel(std::string(GPSURV_TEST_DATA) + "/kernel_bad.csv"), DomainError);
  EXPECT_THROW(load_tabulated_kernel("/nonexistent/k.csv"), DomainError);
}

TEST(Kernels, A1MatchesHandComputationSE) {
  for (double ell : {1.0, 4.0, 5.0}) {
    auto rep = check_a1(StationaryKernel::se(ell), 40);
    ASSERT_EQ(rep.entries.size(), 40u);
    for (const auto& e : rep.entries) EXPECT_EQ(e.pass, a1_se_by_hand(ell, e.n)) << "ell=" << ell << " n=" << e.n;
  }
}

TEST(Kernels, A1MatchesHandComputationOU) {
  for (double ell : {1.0, 2000.0}) {
    auto rep = check_a1(StationaryKernel::ou(ell), 40);
    for (const auto& e : rep.entries) EXPECT_EQ(e.pass, a1_ou_by_hand(ell, e.n)) << "ell=" << ell << " n=" << e.n;
  }
}

TEST(Kernels, A1UnitLengthscaleFailsAtSmallN) {
  // n^6 outgrows 4^n / ell^2 for n in 2..9 when ell = 1
  auto se = check_a1(StationaryKernel::se(1.0));
  std::vector<int> expect{2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(se.failing(), expect);
  EXPECT_FALSE(se.all_pass);
  auto ou = check_a1(StationaryKernel::ou(1.0));
  EXPECT_EQ(ou.failing().front(), 2);
  EXPECT_EQ(ou.failing().back(), 29);
}

TEST(Kernels, A1PassesForLongLengthscales) {
  EXPECT_TRUE(check_a1(StationaryKernel::se(5.0)).all_pass);
  EXPECT_TRUE(check_a1(StationaryKernel::ou(2000.0)).all_pass);
}

TEST(Kernels, A1ConstantKernelIsDegenerate) {
  auto rep = check_a1(constant_kernel());
  EXPECT_FALSE(rep.all_pass);
  EXPECT_TRUE(rep.entries.front().degenerate);
  EXPECT_TRUE(std::isinf(rep.entries.front().inverse));
  EXPECT_THROW(check_a1(StationaryKernel::se(1.0), 0), DomainError);
}

TEST(Kernels, SublinearIntegralOracle) {
  const double ell = 2.0;
  auto rep = check_sublinear_integral(StationaryKernel::ou(ell), {1, 10, 100});
  ASSERT_EQ(rep.ratios.size(), 3u);
  for (auto [T, r] : rep.ratios) EXPECT_NEAR(r, ell * (1 - std::exp(-T / ell)) / T, 1e-9);
  EXPECT_TRUE(rep.pass);
  auto se = check_sublinear_integral(StationaryKernel::se(1.0), {10, 100, 1000});
  EXPECT_NEAR(se.ratios[2].second, std::sqrt(M_PI) / 2 / 1000, 1e-9);
  EXPECT_TRUE(se.pass);
  EXPECT_FALSE(check_sublinear_integral(constant_kernel(), {10, 100, 1000}).pass);
  EXPECT_THROW(check_sublinear_integral(StationaryKernel::se(1.0), {10, 5}), DomainError);
}
