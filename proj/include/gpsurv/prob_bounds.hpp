#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gpsurv/core.hpp"
#include "gpsurv/gp_paths.hpp"
#include "gpsurv/kernels.hpp"

namespace gpsurv {

namespace detail {
// 9 h_d(t)^-2 M^2 / (4 pi^4); tail terms need this above log 2
inline double c_exponent(int d, double M, double t) {
  double h = h_weight(d, t);
  double pi4 = std::pow(std::numbers::pi, 4);
  return 9.0 * M * M / (h * h * 4.0 * pi4);
}
}  // namespace detail

inline double tau_star(int d, double M) {
  require(M > 0, "tau_star: M must be positive");
  require(d >= 0, "tau_star: d must be nonnegative");
  const double ln2 = std::numbers::ln2;
  auto holds = [&](double t) { return detail::c_exponent(d, M, t) > ln2; };
  if (holds(1.0)) return 1.0;
  double lo = 1.0, hi = 2.0;
  while (!holds(hi)) {
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1e-7) {
    double mid = 0.5 * (lo + hi);
    (holds(mid) ? hi : lo) = mid;
  }
  return hi;
}

struct TailBoundSpec {
  int d = 0;
  double M = 1;
  double kappa0 = 1;
  double tau = 2;
  int j_max = 200;
};

struct TailBoundResult {
  double value = 0;
  std::vector<double> terms;
  double dropped_bound = 0;  // geometric bound on sum_{j > j_max}
  std::string truncation_note;
};

inline TailBoundResult tail_bound_series(const TailBoundSpec& s) {
  require(s.tau > 1 && s.j_max >= 1 && s.M > 0 && s.kappa0 > 0, "tail_bound_series: invalid spec");
  double ts = tau_star(s.d, s.M);
  if (s.tau < ts)
    throw PreconditionError("tail_bound_series: tau=" + std::to_string(s.tau) + " below threshold tau_star=" +
                            std::to_string(ts));
  const double ln2 = std::numbers::ln2;
  double C0 = detail::c_exponent(s.d, s.M, s.tau) - ln2;
  if (!(C0 > 0)) throw PreconditionError("tail_bound_series: C_0 not positive at tau");
  const double K0 = 2.0 / (-std::expm1(-C0));
  TailBoundResult r;
  std::vector<double> first, second;
  for (int j = 0; j <= s.j_max; ++j) {
    double t = s.tau + j;
    double h = h_weight(s.d, t);
    double a = 4.0 * std::exp(-s.M * s.M / (h * h * 32.0 * s.kappa0));
    double b = K0 * std::exp(-(detail::c_exponent(s.d, s.M, t) - ln2));
    first.push_back(a);
    second.push_back(b);
    r.terms.push_back(a + b);
    r.value += a + b;
  }
  // each part has decreasing term ratios (h^-2 is convex for t >= 1)
  auto geo = [&](const std::vector<double>& v) {
    std::size_t n = v.size();
    if (v[n - 1] == 0) return 0.0;
    double q = v[n - 1] / v[n - 2];
    return q < 1 ? v[n - 1] * q / (1 - q) : INFINITY;
  };
  if (s.j_max >= 1) r.dropped_bound = geo(first) + geo(second);
  r.truncation_note = "terms beyond j_max=" + std::to_string(s.j_max) + " sum to at most " +
                      std::to_string(r.dropped_bound);
  return r;
}

struct SmallBallResult {
  double bound = 0;
  double psi = 0;
  double centre_prob = 0;   // P(|N(0, k(0))| <= psi/4)
  double series = 0;        // partial sum plus tail certificate
  bool converged = false;
  bool a1_holds = false;
  std::vector<int> a1_failing;
  std::string diagnostic;
};

inline double small_ball_psi(int d, double delta, double tau) {
  return delta * h_weight(d, tau) / (h_weight(d, 1.0) * (1 + tau));
}

inline SmallBallResult small_ball_lower_bound(const StationaryKernel& kernel, int d, double delta, double tau,
                                              int n_max = 40) {
  require(delta > 0, "small_ball_lower_bound: delta must be positive");
  require(tau >= 1, "small_ball_lower_bound: tau must be >= 1");
  require(n_max >= 1, "small_ball_lower_bound: n_max must be >= 1");
  SmallBallResult r;
  auto a1 = check_a1(kernel, n_max);
  r.a1_holds = a1.all_pass;
  r.a1_failing = a1.failing();
  if (!r.a1_holds) r.diagnostic = "A1 fails for some n <= n_max; the bound below assumes it. ";
  r.psi = small_ball_psi(d, delta, tau);
  const double k0 = kernel(0.0);
  r.centre_prob = std::erf(r.psi / 4.0 / std::sqrt(2.0 * k0));
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double a = 9.0 * r.psi * r.psi / (4.0 * pi2);
  const double ln2 = std::numbers::ln2;
  auto log_term = [&](double n) { return -a * n * n + n * ln2 - std::log(-std::expm1(-a * n * n)); };
  // term ratio at n_max is below exp(-a(2n+1) + log 2)
  double rho = std::exp(-a * (2.0 * n_max + 1) + ln2);
  r.converged = rho < 1;
  if (!r.converged) {
    r.bound = 0;
    r.diagnostic += "series not converged at n_max=" + std::to_string(n_max) + " (psi=" + std::to_string(r.psi) +
                    " too small); bound set to 0";
    return r;
  }
  double sum = 0;
  for (int n = 1; n <= n_max; ++n) sum += std::exp(log_term(n));
  sum += std::exp(log_term(n_max)) * rho / (1 - rho);
  r.series = sum;
  r.bound = std::clamp(r.centre_prob * r.centre_prob * std::exp(-sum), 0.0, 1.0);
  return r;
}

struct CentredEventResult {
  double lower = 0;
  double small_ball = 0;
  double tail_value = 0;
  double tail_factor = 0;
  double psi = 0;
};

inline CentredEventResult centred_event_bound(const StationaryKernel& kernel, int d, double delta, double tau,
                                              int n_max = 40, int j_max = 200) {
  double thr = std::max(tau_star(d, 1.0 / 6.0), 1.0);
  if (tau < thr)
    throw PreconditionError("centred_event_bound: tau=" + std::to_string(tau) + " below threshold " +
                            std::to_string(thr));
  auto sb = small_ball_lower_bound(kernel, d, delta / 2, tau, n_max);
  auto tb = tail_bound_series({d, 1.0 / 6.0, kernel(0.0), tau, j_max});
  CentredEventResult r;
  r.small_ball = sb.bound;
  r.psi = sb.psi;
  r.tail_value = tb.value;
  r.tail_factor = std::max(0.0, 1.0 - tb.value);
  r.lower = r.small_ball * r.tail_factor;
  return r;
}

// Smallest tau in the list with a positive centred-event lower bound.
inline std::optional<double> tau_c_proxy(const StationaryKernel& kernel, int d, double delta,
                                         const std::vector<double>& taus, int n_max = 40, int j_max = 200) {
  double thr = std::max(tau_star(d, 1.0 / 6.0), 1.0);
  for (double t : taus) {
    if (t < thr) continue;
    if (centred_event_bound(kernel, d, delta, t, n_max, j_max).lower > 0) return t;
  }
  return std::nullopt;
}

struct BoundReport {
  std::string lemma_id;
  double analytic_value = 0;
  double mc_estimate = 0;
  double se = 0;
  double ci = 0;            // 1.96 se
  bool upper = true;        // analytic value bounds the MC quantity from above
  bool verdict = false;

  static BoundReport make(std::string id, double analytic, double mc, double se, bool upper) {
    BoundReport b{std::move(id), analytic, mc, se, 1.96 * se, upper, false};
    b.verdict = upper ? mc <= analytic + 3 * se : mc >= analytic - 3 * se;
    return b;
  }
};

}  // namespace gpsurv
