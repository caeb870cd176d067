#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "gpsurv/core.hpp"
#include "gpsurv/gp_paths.hpp"
#include "gpsurv/hazard_model.hpp"
#include "gpsurv/vc_metrics.hpp"

namespace gpsurv {

struct BSetParams {
  double delta = 0.1;
  double tau = 2.0;
  int d = 0;

  void validate() const {
    require(delta > 0 && delta < 0.5, "BSetParams: delta must lie in (0, 1/2)");
    require(tau > 1, "BSetParams: tau must exceed 1");
    require(d >= 0, "BSetParams: d must be nonnegative");
  }
};

inline double upsilon(const Theta& theta0, const Theta& theta, const Covariate& x, double t) {
  require(t > 0, "upsilon: t must be positive");
  if (t > std::min(theta0.horizon(), theta.horizon()) * (1 + 1e-12))
    throw DomainError("upsilon: t beyond horizon");
  HazardCurve f0(theta0, x), f(theta, x);
  return f0.log_density(t) - f.log_density(t);
}

struct QuadSpec {
  double t_cut = 0;                  // <= 0 means 40 / omega0
  std::size_t panels = 1u << 14;
};

struct KLTerms {
  double K = 0;           // integral over [0, T_cut]
  double V = 0;           // second moment over [0, T_cut] minus K^2
  double tail_bound = 0;  // envelope bound on |int_{T_cut}^inf Upsilon f0|
  double tail_bound_sq = 0;
  double t_cut = 0;
};

inline KLTerms kl_terms(const Theta& theta0, const Theta& theta, const Covariate& x, const QuadSpec& quad = {}) {
  HazardCurve c0(theta0, x), c(theta, x);
  double T = quad.t_cut > 0 ? quad.t_cut : 40.0 / theta0.omega;
  T = std::min({T, theta0.horizon(), theta.horizon()});
  std::size_t P = std::max<std::size_t>(quad.panels, 2);
  if (P % 2) ++P;
  const double h = T / static_cast<double>(P);
  double s1 = 0, s2 = 0;
  for (std::size_t i = 0; i <= P; ++i) {
    double t = i == P ? T : static_cast<double>(i) * h;
    double u = c0.log_density(t) - c.log_density(t);
    double f0 = c0.density(t);
    double w = (i == 0 || i == P) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s1 += w * u * f0;
    s2 += w * u * u * f0;
  }
  KLTerms out;
  out.t_cut = T;
  out.K = s1 * h / 3.0;
  double m2 = s2 * h / 3.0;
  if (!std::isfinite(out.K) || !std::isfinite(m2)) throw NumericError("kl_terms: non-finite quadrature");
  out.V = m2 - out.K * out.K;

  // |Upsilon(t)| <= A + b t beyond T_cut, with the sigma floors taken on the
  // grids, and f0(t) <= omega0 S0(T) exp(-omega0 sigma_min (t - T)).
  const double O0 = theta0.omega, O = theta.omega;
  double A = std::abs(std::log(O0 / O)) + std::max(-std::log(c0.sigma_min()), -std::log(c.sigma_min()));
  double b = 1.0 + std::max(O, O0);
  double r = O0 * c0.sigma_min();
  double pre = O0 * c0.survival(T);
  if (r > 0) {
    out.tail_bound = pre * (A / r + b * (T / r + 1 / (r * r)));
    out.tail_bound_sq = pre * (A * A / r + 2 * A * b * (T / r + 1 / (r * r)) +
                               b * b * (T * T / r + 2 * T / (r * r) + 2 / (r * r * r)));
  } else {
    out.tail_bound = out.tail_bound_sq = INFINITY;
  }
  return out;
}

struct KLAggregate {
  Design design = Design::RD;
  double value = 0;                 // RD: Q-average of K; NRD: max_i K_i
  std::vector<double> per_x_K, per_x_V;
  double v_partial_sum = 0;         // NRD: sum_{i<=n} V_i / i^2
  double v_tail_bound = 0;          // NRD: (max V) / n >= (max V) sum_{i>n} i^-2
};

// NRD series for an already computed sequence of V_i.
inline std::pair<double, double> v_series(const std::vector<double>& V) {
  double s = 0, vmax = 0;
  for (std::size_t i = 0; i < V.size(); ++i) {
    double k = static_cast<double>(i + 1);
    s += V[i] / (k * k);
    vmax = std::max(vmax, V[i]);
  }
  return {s, V.empty() ? 0.0 : vmax / static_cast<double>(V.size())};
}

inline KLAggregate kl_aggregate(const Theta& theta0, const Theta& theta, Design design,
                                const CovariateQuadrature& rd_quad, const std::vector<Covariate>& fixed,
                                const QuadSpec& quad = {}) {
  KLAggregate out;
  out.design = design;
  if (design == Design::RD) {
    require(!rd_quad.nodes.empty(), "kl_aggregate: empty covariate quadrature");
    std::vector<KLTerms> terms(rd_quad.nodes.size());
    parallel_for(terms.size(), [&](std::size_t k) { terms[k] = kl_terms(theta0, theta, rd_quad.nodes[k].x, quad); });
    for (std::size_t k = 0; k < terms.size(); ++k) {
      out.value += rd_quad.nodes[k].w * terms[k].K;
      out.per_x_K.push_back(terms[k].K);
      out.per_x_V.push_back(terms[k].V);
    }
    return out;
  }
  require(!fixed.empty(), "kl_aggregate: empty fixed covariate list");
  std::map<Covariate, KLTerms> cache;
  for (const auto& x : fixed)
    if (!cache.count(x)) cache[x] = kl_terms(theta0, theta, x, quad);
  out.value = -INFINITY;
  for (const auto& x : fixed) {
    const auto& t = cache[x];
    out.per_x_K.push_back(t.K);
    out.per_x_V.push_back(t.V);
    out.value = std::max(out.value, t.K);
  }
  std::tie(out.v_partial_sum, out.v_tail_bound) = v_series(out.per_x_V);
  return out;
}

struct BSetMembership {
  bool omega_ok = false;
  std::vector<bool> sup_ok, inf_ok;
  std::vector<double> sup_gap, inf_value;
  bool member = false;
  bool inf_truncated = true;  // inf over t > tau only sees the grid up to its horizon
};

inline BSetMembership b_set_membership(const Theta& theta, const Theta& theta0, const BSetParams& p) {
  p.validate();
  theta.validate();
  theta0.validate();
  require(theta.d() == theta0.d() && theta.d() == p.d, "b_set_membership: dimension mismatch");
  require(theta.grid() == theta0.grid(), "b_set_membership: thetas must share a grid");
  if (p.tau >= theta.horizon()) throw DomainError("b_set_membership: tau beyond grid horizon");
  BSetMembership m;
  m.omega_ok = std::abs(theta.omega / theta0.omega - 1) < p.delta;
  const auto& g = theta.grid();
  const double radius = p.delta / (1 + p.tau);
  m.member = m.omega_ok;
  for (int j = 0; j <= p.d; ++j) {
    const auto& a = theta.paths[j];
    const auto& b = theta0.paths[j];
    double gap = std::abs(a(p.tau) - b(p.tau));
    double inf = INFINITY;
    for (std::size_t k = 0; k < g.size(); ++k) {
      double t = g.t(k);
      if (t <= p.tau) gap = std::max(gap, std::abs(a.values[k] - b.values[k]));
      else inf = std::min(inf, a.values[k] * h_weight(p.d, t));
    }
    // "<=" is inclusive; allow a few ulps so exact boundary cases survive rounding
    bool sup_ok = gap <= radius * (1 + 8 * std::numeric_limits<double>::epsilon());
    bool inf_ok = inf > -1;
    m.sup_gap.push_back(gap);
    m.inf_value.push_back(inf);
    m.sup_ok.push_back(sup_ok);
    m.inf_ok.push_back(inf_ok);
    m.member = m.member && sup_ok && inf_ok;
  }
  return m;
}

struct LinkSupCheck {
  double max_sigma_gap = 0;
  double max_logsigma_gap = 0;
  double bound = 0;
  bool pass = false;
  bool vacuous = false;
};

inline LinkSupCheck link_sup_check(const Theta& theta, const Theta& theta0, const BSetParams& p,
                                   const std::vector<Covariate>& xs) {
  auto mem = b_set_membership(theta, theta0, p);
  LinkSupCheck r;
  r.bound = (p.d + 1) * p.delta / (1 + p.tau);
  for (bool ok : mem.sup_ok) r.vacuous = r.vacuous || !ok;
  const auto& g = theta.grid();
  for (const auto& x : xs) {
    validate_covariate(x, p.d);
    auto visit = [&](double y, double y0) {
      r.max_sigma_gap = std::max(r.max_sigma_gap, std::abs(sigmoid(y) - sigmoid(y0)));
      r.max_logsigma_gap = std::max(r.max_logsigma_gap, std::abs(log_sigmoid(y) - log_sigmoid(y0)));
    };
    for (std::size_t k = 0; k < g.size() && g.t(k) <= p.tau; ++k) visit(theta.y_at(x, k), theta0.y_at(x, k));
    visit(theta.y(x, p.tau), theta0.y(x, p.tau));
  }
  r.pass = r.max_sigma_gap <= r.bound && r.max_logsigma_gap <= r.bound;
  return r;
}

struct MomentInputs {
  double E_T = 0;       // E(T | x)
  double E_T_tail = 0;  // E(T 1{T > tau} | x)
  double P_tail = 0;    // P(T > tau | x)
  double E_T2 = 0;      // E(T^2 | x)
};

struct AnalyticKLBounds {
  double head_bound, tail_bound, var_head_bound, var_tail_bound;
  double K0;
};

inline AnalyticKLBounds analytic_kl_bounds(const BSetParams& p, double omega0, const MomentInputs& mi) {
  p.validate();
  require(omega0 > 0, "analytic_kl_bounds: omega0 must be positive");
  require(mi.E_T >= 0 && mi.E_T_tail >= 0 && mi.P_tail >= 0 && mi.E_T2 >= 0,
          "analytic_kl_bounds: moment inputs must be nonnegative");
  const double dl = p.delta, d1 = p.d + 1.0, O0 = omega0;
  AnalyticKLBounds b{};
  b.K0 = std::max(std::abs(std::log(O0 * (1 - dl))), std::abs(std::log(O0 * (1 + dl))));
  b.head_bound = dl * (1 / (1 - dl) + d1 / (p.tau + 1) + O0 * d1 + O0 * mi.E_T);
  // int_tau^inf f0^2 <= omega0 P_tail since f0 <= omega0
  b.tail_bound = O0 * mi.P_tail + b.K0 * mi.P_tail + (1 + O0 * (1 + dl)) * mi.E_T_tail;
  // head pieces: 3 log^2(omega0/omega), 3 (link gap)^2, 6 (omega gap)^2 t^2, 6 omega0^2 (link gap)^2 t^2
  b.var_head_bound = 12 * dl + 1.5 * d1 * d1 * dl + 6 * O0 * O0 * dl * dl * mi.E_T2 + 6 * O0 * O0 * d1 * d1 * dl * dl;
  b.var_tail_bound = (2 * O0 * O0 + 2) + 6 * b.K0 * b.K0 * mi.P_tail + 6 * mi.E_T2 +
                     6 * O0 * O0 * (1 + dl) * (1 + dl) * mi.E_T2;
  return b;
}

struct ConditionalMoments {
  MomentInputs m;
  double tail_bound_ET = 0;  // envelope share beyond the grid horizon
};

// Moments of T given x under theta0 up to the grid horizon, plus envelope tails.
inline ConditionalMoments conditional_moments(const Theta& theta0, const Covariate& x, double tau,
                                              std::size_t panels = 1u << 14) {
  HazardCurve c(theta0, x);
  const double H = theta0.horizon();
  auto f = [&](double t) { return c.density(t); };
  ConditionalMoments out;
  out.m.E_T = simpson([&](double t) { return t * f(t); }, 0, H, panels);
  out.m.E_T2 = simpson([&](double t) { return t * t * f(t); }, 0, H, panels);
  double tt = std::min(tau, H);
  out.m.E_T_tail = simpson([&](double t) { return t * f(t); }, tt, H, panels);
  out.m.P_tail = c.survival(tt);
  double r = theta0.omega * c.sigma_min(), S = c.survival(H);
  if (r > 0) {
    double e1 = theta0.omega * S * (H / r + 1 / (r * r));
    double e2 = theta0.omega * S * (H * H / r + 2 * H / (r * r) + 2 / (r * r * r));
    out.m.E_T += e1;
    out.m.E_T_tail += e1;
    out.m.E_T2 += e2;
    out.tail_bound_ET = e1;
  }
  return out;
}

struct MomentCheck {
  double A3_estimate = 0;
  double A3_tail = 0;
  double A3prime_worst = 0;
  bool a3_pass = false;
  bool a3prime_pass = false;
  bool inconclusive = false;
  std::vector<std::pair<double, double>> ladder;  // (n, E[T 1{T > n}])
  bool ladder_decreasing = false;
};

inline MomentCheck moment_checks(const Theta& theta0, const CovariateQuadrature& q, double M, double delta,
                                 std::vector<double> ladder = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10},
                                 std::size_t panels = 1u << 14) {
  theta0.validate();
  require(q.d == theta0.d(), "moment_checks: dimension mismatch");
  require(M > 0 && delta > 0, "moment_checks: M and delta must be positive");
  const double H = theta0.horizon(), O0 = theta0.omega;
  MomentCheck out;
  out.inconclusive = H <= M;
  std::vector<double> lad(ladder.size(), 0.0);
  for (const auto& nd : q.nodes) {
    HazardCurve c(theta0, nd.x);
    double r = O0 * c.sigma_min(), S = c.survival(H);
    if (!(r > 1e-300)) {
      out.inconclusive = true;
      continue;
    }
    auto tail1 = [&](double from) {  // int_from^inf t f, from >= H, envelope only
      return O0 * S * std::exp(-r * (from - H)) * (from / r + 1 / (r * r));
    };
    auto f = [&](double t) { return c.density(t); };
    double body = simpson([&](double t) { return t * f(t); }, 0, H, panels);
    double tail = tail1(H);
    out.A3_estimate += nd.w * (body + tail);
    out.A3_tail += nd.w * tail;
    double t2;
    if (M < H) {
      t2 = simpson([&](double t) { return t * t * f(t); }, M, H, panels) +
           O0 * S * (H * H / r + 2 * H / (r * r) + 2 / (r * r * r));
    } else {
      t2 = O0 * S * std::exp(-r * (M - H)) * (M * M / r + 2 * M / (r * r) + 2 / (r * r * r));
    }
    out.A3prime_worst = std::max(out.A3prime_worst, t2);
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      double n = ladder[i];
      lad[i] += nd.w * (n < H ? simpson([&](double t) { return t * f(t); }, n, H, panels) + tail : tail1(n));
    }
  }
  if (out.A3_tail > 1e-3 * out.A3_estimate) out.inconclusive = true;
  out.a3_pass = !out.inconclusive && std::isfinite(out.A3_estimate);
  out.a3prime_pass = !out.inconclusive && out.A3prime_worst <= delta;
  out.ladder_decreasing = true;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    out.ladder.push_back({ladder[i], lad[i]});
    if (i) out.ladder_decreasing = out.ladder_decreasing && lad[i] < lad[i - 1];
  }
  return out;
}

}  // namespace gpsurv
