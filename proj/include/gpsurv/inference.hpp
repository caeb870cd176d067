#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gpsurv/core.hpp"
#include "gpsurv/gp_paths.hpp"
#include "gpsurv/hazard_model.hpp"
#include "gpsurv/kernels.hpp"
#include "gpsurv/vc_metrics.hpp"

namespace gpsurv {

// Paths at fixed knots, linear in between and held flat past the last knot.
// A single knot means a constant path.
struct ThetaRep {
  double omega = 1.0;
  double horizon = 1.0;
  std::vector<double> knots;
  std::vector<std::vector<double>> values;  // (d+1) x K

  int d() const { return static_cast<int>(values.size()) - 1; }
  std::size_t K() const { return knots.size(); }

  void validate() const {
    require(omega > 0, "ThetaRep: omega must be positive");
    require(!knots.empty() && knots.front() == 0.0, "ThetaRep: knots must start at 0");
    for (std::size_t k = 1; k < knots.size(); ++k) require(knots[k] > knots[k - 1], "ThetaRep: knots must increase");
    require(knots.back() <= horizon, "ThetaRep: knots beyond horizon");
    require(!values.empty(), "ThetaRep: needs at least eta_0");
    for (const auto& v : values) require(v.size() == knots.size(), "ThetaRep: value count mismatch");
  }

  double path(std::size_t j, double t) const {
    const auto& v = values[j];
    if (knots.size() == 1 || t <= 0) return v.front();
    if (t >= knots.back()) return v.back();
    auto it = std::upper_bound(knots.begin(), knots.end(), t);
    std::size_t k = static_cast<std::size_t>(it - knots.begin());
    double w = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
    return v[k - 1] + w * (v[k] - v[k - 1]);
  }

  static std::vector<double> uniform_knots(double horizon, std::size_t K) {
    require(K >= 1, "uniform_knots: K must be >= 1");
    std::vector<double> k(K, 0.0);
    for (std::size_t i = 1; i < K; ++i) k[i] = horizon * static_cast<double>(i) / static_cast<double>(K - 1);
    return k;
  }

  static ThetaRep zeros(double omega, int d, double horizon, std::size_t K) {
    ThetaRep r{omega, horizon, uniform_knots(horizon, K), {}};
    r.values.assign(static_cast<std::size_t>(d + 1), std::vector<double>(K, 0.0));
    return r;
  }
};

// Interpolates the rep onto a dyadic grid; exact at grid points, and the
// piecewise-linear shapes agree up to the grid spacing near knots.
inline Theta to_theta(const ThetaRep& rep, int level) {
  rep.validate();
  DyadicGrid g(rep.horizon, level);
  Theta th{rep.omega, {}};
  for (int j = 0; j <= rep.d(); ++j) {
    GpPath p{g, std::vector<double>(g.size()), j, Interpolation::linear};
    for (std::size_t k = 0; k < g.size(); ++k) p.values[k] = rep.path(static_cast<std::size_t>(j), g.t(k));
    th.paths.push_back(std::move(p));
  }
  return th;
}

inline ThetaRep rep_from_theta(const Theta& theta, const std::vector<double>& knots) {
  ThetaRep r{theta.omega, theta.horizon(), knots, {}};
  for (const auto& p : theta.paths) {
    std::vector<double> v;
    for (double t : knots) v.push_back(p(t));
    r.values.push_back(std::move(v));
  }
  r.validate();
  return r;
}

struct Prior {
  std::vector<StationaryKernel> kernels;  // one per path
  double omega_shape = 2.0;
  double omega_rate = 1.0;

  double log_nu(double omega) const {
    const double a = omega_shape, b = omega_rate;
    return a * std::log(b) - std::lgamma(a) + (a - 1) * std::log(omega) - b * omega;
  }
};

namespace detail {
// int over one knot segment of sigma(linear y), per unit length
inline double sigmoid_segment_mean(double y0, double y1) {
  double dy = y1 - y0;
  if (std::abs(dy) > 1e-4) return (softplus(y1) - softplus(y0)) / dy;
  double m = 0.5 * (y0 + y1), s = sigmoid(m);
  return s + s * (1 - s) * (1 - 2 * s) * dy * dy / 24.0;
}
}  // namespace detail

// Log-likelihood of a dataset under ThetaRep, written as
// n log(omega) + S1 - omega S2 so omega moves cost O(1).
class RepLikelihood {
 public:
  RepLikelihood(const SurvivalDataset& ds, std::vector<double> knots, double horizon)
      : ds_(&ds), knots_(std::move(knots)), horizon_(horizon) {
    if (ds.n() == 0) throw PreconditionError("likelihood: empty dataset");
    double dh = ds.horizon;
    for (const auto& r : ds.records) dh = std::max(dh, r.t);
    if (dh > horizon * (1 + 1e-12)) throw DomainError("likelihood: dataset horizon beyond rep horizon");
    seg_.resize(ds.n());
    frac_.resize(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
      double t = ds.records[i].t;
      auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
      seg_[i] = static_cast<std::size_t>(it - knots_.begin()) - 1;  // last knot <= t
      frac_[i] = seg_[i] + 1 < knots_.size() ? (t - knots_[seg_[i]]) / (knots_[seg_[i] + 1] - knots_[seg_[i]]) : 0.0;
    }
    y_.resize(knots_.size());
  }

  std::size_t n() const { return ds_->n(); }

  struct Parts {
    double S1 = 0, S2 = 0;
  };

  Parts parts(const std::vector<std::vector<double>>& values) {
    Parts p;
    const std::size_t K = knots_.size();
    for (std::size_t i = 0; i < ds_->n(); ++i) {
      const auto& rec = ds_->records[i];
      const std::size_t s = seg_[i];
      const std::size_t top = std::min(K - 1, s + 1);
      for (std::size_t k = 0; k <= top; ++k) {
        double y = values[0][k];
        for (std::size_t j = 0; j < rec.x.size(); ++j) y += rec.x[j] * values[j + 1][k];
        y_[k] = y;
      }
      double integral = 0;
      for (std::size_t k = 0; k < s; ++k)
        integral += (knots_[k + 1] - knots_[k]) * detail::sigmoid_segment_mean(y_[k], y_[k + 1]);
      double yt;
      if (s + 1 < K) {
        yt = y_[s] + frac_[i] * (y_[s + 1] - y_[s]);
        integral += (rec.t - knots_[s]) * detail::sigmoid_segment_mean(y_[s], yt);
      } else {
        yt = y_[s];
        integral += (rec.t - knots_[s]) * sigmoid(yt);
      }
      double ls = log_sigmoid(yt);
      if (!std::isfinite(ls) || !std::isfinite(integral))
        throw NumericError("likelihood: non-finite contribution at record " + std::to_string(i));
      p.S1 += ls;
      p.S2 += integral;
    }
    return p;
  }

  double loglik(double omega, const Parts& p) const {
    return static_cast<double>(ds_->n()) * std::log(omega) + p.S1 - omega * p.S2;
  }

 private:
  const SurvivalDataset* ds_;
  std::vector<double> knots_;
  double horizon_;
  std::vector<std::size_t> seg_;
  std::vector<double> frac_;
  std::vector<double> y_;
};

struct KnotPrior {
  Eigen::MatrixXd L;  // Cholesky factor of the knot covariance
  double log_norm = 0;

  KnotPrior(const StationaryKernel& k, const std::vector<double>& knots) : L(covariance_factor(k, knots)) {
    log_norm = -0.5 * static_cast<double>(knots.size()) * std::log(2 * std::numbers::pi);
    for (Eigen::Index i = 0; i < L.rows(); ++i) log_norm -= std::log(L(i, i));
  }
  double log_density(const std::vector<double>& v) const {
    Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x);
    return log_norm - 0.5 * z.squaredNorm();
  }
  void draw(Rng& rng, std::vector<double>& out) const {
    Eigen::VectorXd z(L.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
    Eigen::VectorXd v = L.triangularView<Eigen::Lower>() * z;
    out.assign(v.data(), v.data() + v.size());
  }
};

inline double log_posterior(const ThetaRep& rep, const SurvivalDataset& ds, const Prior& prior) {
  rep.validate();
  require(prior.kernels.size() == rep.values.size(), "log_posterior: one kernel per path required");
  require(ds.d == rep.d(), "log_posterior: dimension mismatch");
  RepLikelihood lik(ds, rep.knots, rep.horizon);
  double lp = lik.loglik(rep.omega, lik.parts(rep.values));
  for (std::size_t j = 0; j < rep.values.size(); ++j) lp += KnotPrior(prior.kernels[j], rep.knots).log_density(rep.values[j]);
  return lp + prior.log_nu(rep.omega);
}

struct McmcConfig {
  std::size_t iterations = 6000;
  std::size_t burn_in = 2000;
  std::size_t thinning = 10;
  double proposal_scale_omega = 0.1;  // sd of the log-omega random walk
  double proposal_scale_path = 0.3;   // pCN angle in radians
  std::uint64_t seed = 1;
  std::size_t knots = 8;
  double horizon = 20;
  bool prior_only = false;            // drop the likelihood entirely
  bool adapt = true;                  // tune both scales during burn-in only
  bool fix_omega = false;
  std::optional<double> omega_init;

  void validate() const {
    require(iterations > 0 && thinning > 0, "McmcConfig: iterations and thinning must be positive");
    require(burn_in < iterations, "McmcConfig: burn_in must be below iterations");
    require(proposal_scale_omega > 0 && proposal_scale_path > 0, "McmcConfig: proposal scales must be positive");
    require(knots >= 1 && horizon > 0, "McmcConfig: need knots >= 1 and horizon > 0");
  }
};

struct McmcResult {
  std::vector<ThetaRep> draws;
  double acceptance_omega = 0;              // post burn-in
  std::vector<double> acceptance_paths;     // post burn-in, per path
  double final_scale_omega = 0, final_scale_path = 0;
  std::vector<std::string> warnings;

  double acceptance_paths_mean() const {
    double s = 0;
    for (double a : acceptance_paths) s += a;
    return acceptance_paths.empty() ? 0 : s / static_cast<double>(acceptance_paths.size());
  }
};

inline McmcResult mcmc_run(const SurvivalDataset& ds, const Prior& prior, const McmcConfig& cfg) {
  cfg.validate();
  if (!cfg.prior_only && ds.n() == 0) throw PreconditionError("mcmc_run: empty dataset");
  const int d = ds.d;
  require(prior.kernels.size() == static_cast<std::size_t>(d + 1), "mcmc_run: one kernel per path required");
  require(prior.omega_shape > 0 && prior.omega_rate > 0, "mcmc_run: omega prior parameters must be positive");

  Rng rng = make_stream(cfg.seed, 0x6d636d63);
  ThetaRep cur = ThetaRep::zeros(1.0, d, cfg.horizon, cfg.knots);
  std::vector<KnotPrior> kp;
  for (const auto& k : prior.kernels) kp.emplace_back(k, cur.knots);

  std::optional<RepLikelihood> lik;
  if (!cfg.prior_only) lik.emplace(ds, cur.knots, cur.horizon);

  if (cfg.omega_init) cur.omega = *cfg.omega_init;
  else if (cfg.prior_only) cur.omega = prior.omega_shape / prior.omega_rate;
  else {
    double st = 0;
    for (const auto& r : ds.records) st += r.t;
    cur.omega = 2.0 * static_cast<double>(ds.n()) / st;
  }

  RepLikelihood::Parts parts;
  if (lik) parts = lik->parts(cur.values);
  auto ll = [&](double om, const RepLikelihood::Parts& p) { return lik ? lik->loglik(om, p) : 0.0; };

  double s_om = cfg.proposal_scale_omega, beta = cfg.proposal_scale_path;
  std::size_t win_om = 0, win_path = 0, win_n = 0;
  std::size_t acc_om = 0, post_n = 0;
  std::vector<std::size_t> acc_path(static_cast<std::size_t>(d + 1), 0);
  McmcResult res;
  std::vector<double> xi;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const bool post = it >= cfg.burn_in;
    if (!cfg.fix_omega) {
      double prop = cur.omega * std::exp(s_om * std_normal(rng));
      double logr = ll(prop, parts) + prior.log_nu(prop) + std::log(prop) -
                    (ll(cur.omega, parts) + prior.log_nu(cur.omega) + std::log(cur.omega));
      if (std::log(uniform01(rng)) < logr) {
        cur.omega = prop;
        ++win_om;
        if (post) ++acc_om;
      }
    }
    for (int j = 0; j <= d; ++j) {
      kp[j].draw(rng, xi);
      auto old = cur.values[j];
      const double c = std::cos(beta), s = std::sin(beta);
      for (std::size_t k = 0; k < xi.size(); ++k) cur.values[j][k] = c * old[k] + s * xi[k];
      RepLikelihood::Parts np;
      if (lik) np = lik->parts(cur.values);
      double logr = ll(cur.omega, np) - ll(cur.omega, parts);
      if (std::log(uniform01(rng)) < logr) {
        parts = np;
        ++win_path;
        if (post) ++acc_path[j];
      } else {
        cur.values[j] = std::move(old);
      }
    }
    ++win_n;
    if (cfg.adapt && !post && win_n == 50) {
      double r_om = static_cast<double>(win_om) / 50.0;
      double r_p = static_cast<double>(win_path) / (50.0 * (d + 1));
      if (!cfg.fix_omega) s_om *= std::exp(r_om - 0.3);
      beta = std::min(std::numbers::pi / 2, beta * std::exp(r_p - 0.3));
      win_om = win_path = win_n = 0;
    }
    if (post) {
      ++post_n;
      if ((it - cfg.burn_in) % cfg.thinning == 0) res.draws.push_back(cur);
    }
  }
  res.acceptance_omega = cfg.fix_omega ? 0.0 : static_cast<double>(acc_om) / static_cast<double>(post_n);
  for (auto a : acc_path) res.acceptance_paths.push_back(static_cast<double>(a) / static_cast<double>(post_n));
  res.final_scale_omega = s_om;
  res.final_scale_path = beta;
  auto warn = [&](const std::string& block, double rate) {
    if (rate < 0.01 || rate > 0.99)
      res.warnings.push_back(block + " acceptance " + std::to_string(rate) + " outside [1%, 99%]");
  };
  if (!cfg.fix_omega) warn("omega", res.acceptance_omega);
  for (int j = 0; j <= d; ++j)
    if (!cfg.prior_only) warn("path " + std::to_string(j), res.acceptance_paths[j]);
  return res;
}

inline std::vector<double> posterior_distances(const std::vector<ThetaRep>& draws, const Theta& theta0,
                                               const CovariateQuadrature& q, const GridSpec& grid, int level = 8) {
  require(!draws.empty(), "posterior_distances: no draws");
  std::vector<double> out(draws.size());
  parallel_for(draws.size(), [&](std::size_t i) {
    out[i] = sup_deviation_metric(to_theta(draws[i], level), theta0, q, grid).value;
  });
  return out;
}

inline double outside_fraction(const std::vector<double>& dist, double epsilon) {
  std::size_t k = 0;
  for (double v : dist) k += v > epsilon;
  return static_cast<double>(k) / static_cast<double>(dist.size());
}

inline double posterior_outside_mass(const std::vector<ThetaRep>& draws, const Theta& theta0, double epsilon,
                                     const CovariateQuadrature& q, const GridSpec& grid, int level = 8) {
  require(!draws.empty(), "posterior_outside_mass: no draws");
  return outside_fraction(posterior_distances(draws, theta0, q, grid, level), epsilon);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1;
      i = j + 1;
    }
    return r;
  };
  require(a.size() == b.size() && a.size() >= 2, "spearman: need two equal-length samples");
  auto ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(ra.size());
  mb /= static_cast<double>(rb.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return NAN;
  return sab / std::sqrt(saa * sbb);
}

struct ConsistencySpec {
  Theta theta0;
  CovariateLaw law = CovariateLaw::uniform(1);
  std::vector<std::size_t> n_ladder{250, 1000, 4000};
  double epsilon = 0.2;
  std::size_t replications = 5;
  McmcConfig mcmc;
  Prior prior;
  double data_horizon = 20;
  GridSpec grid;
  int metric_level = 8;
  std::uint64_t seed = 1;
};

struct ConsistencyCell {
  std::size_t n = 0, rep = 0;
  double outside_mass = NAN;
  double mean_distance = NAN;  // posterior mean of d(theta, theta0); diagnostic only
  double acceptance_omega = NAN, acceptance_paths = NAN;
  double wall_time = 0;  // seconds; excluded from reproducibility comparisons
  std::string status = "ok";
};

struct ConsistencyReport {
  std::vector<ConsistencyCell> cells;
  std::vector<std::pair<std::size_t, double>> per_n_mean;
  std::vector<double> per_n_distance;  // mean posterior distance, same order as per_n_mean
  double trend = NAN;  // Spearman correlation of per-n mean mass against n
  bool consistent_trend = false;
};

inline ConsistencyReport consistency_experiment(const ConsistencySpec& spec) {
  require(!spec.n_ladder.empty() && spec.replications >= 1, "consistency_experiment: empty ladder or no replications");
  for (std::size_t i = 1; i < spec.n_ladder.size(); ++i)
    require(spec.n_ladder[i] > spec.n_ladder[i - 1], "consistency_experiment: ladder must increase");
  spec.theta0.validate();
  auto q = CovariateQuadrature::from_law(spec.law);

  ConsistencyReport rep;
  const std::size_t R = spec.replications;
  rep.cells.resize(spec.n_ladder.size() * R);
  parallel_for(rep.cells.size(), [&](std::size_t c) {
    auto start = std::chrono::steady_clock::now();
    ConsistencyCell& cell = rep.cells[c];
    cell.n = spec.n_ladder[c / R];
    cell.rep = c % R;
    try {
      Rng keys = make_stream(spec.seed, cell.n, cell.rep);
      std::uint64_t data_seed = keys(), chain_seed = keys();
      auto ds = generate_dataset(spec.theta0, cell.n, spec.law, spec.data_horizon, data_seed);
      McmcConfig mc = spec.mcmc;
      mc.seed = chain_seed;
      auto run = mcmc_run(ds, spec.prior, mc);
      cell.acceptance_omega = run.acceptance_omega;
      cell.acceptance_paths = run.acceptance_paths_mean();
      auto dist = posterior_distances(run.draws, spec.theta0, q, spec.grid, spec.metric_level);
      cell.outside_mass = outside_fraction(dist, spec.epsilon);
      double sum = 0;
      for (double v : dist) sum += v;
      cell.mean_distance = sum / static_cast<double>(dist.size());
    } catch (const std::exception& e) {
      cell.status = std::string("error: ") + e.what();
    }
    cell.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  std::vector<double> ns, means;
  for (std::size_t i = 0; i < spec.n_ladder.size(); ++i) {
    double s = 0, dist = 0;
    std::size_t k = 0;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& cell = rep.cells[i * R + r];
      if (cell.status == "ok") {
        s += cell.outside_mass;
        dist += cell.mean_distance;
        ++k;
      }
    }
    double m = k ? s / static_cast<double>(k) : NAN;
    rep.per_n_mean.push_back({spec.n_ladder[i], m});
    rep.per_n_distance.push_back(k ? dist / static_cast<double>(k) : NAN);
    if (k) {
      ns.push_back(static_cast<double>(spec.n_ladder[i]));
      means.push_back(m);
    }
  }
  if (ns.size() >= 2) rep.trend = spearman(ns, means);
  rep.consistent_trend = std::isfinite(rep.trend) && rep.trend <= -0.8;
  return rep;
}

}  // namespace gpsurv
