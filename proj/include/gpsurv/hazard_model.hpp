#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpsurv/core.hpp"
#include "gpsurv/gp_paths.hpp"
#include "gpsurv/kernels.hpp"

namespace gpsurv {

using Covariate = std::vector<double>;

inline void validate_covariate(const Covariate& x, int d) {
  require(static_cast<int>(x.size()) == d, "covariate has " + std::to_string(x.size()) + " coordinates, expected " +
                                               std::to_string(d));
  for (double v : x) require(v >= 0 && v <= 1, "covariate coordinate outside [0,1]");
}

struct Theta {
  double omega = 1.0;
  std::vector<GpPath> paths;  // eta_0 .. eta_d

  int d() const { return static_cast<int>(paths.size()) - 1; }
  const DyadicGrid& grid() const { return paths.front().grid; }
  double horizon() const { return grid().tau; }

  void validate() const {
    require(omega > 0, "Theta: omega must be positive");
    require(!paths.empty(), "Theta: needs at least eta_0");
    for (const auto& p : paths) {
      p.validate();
      require(p.grid == paths.front().grid, "Theta: paths must share one grid");
    }
  }

  // Latent combination eta_0 + sum x_j eta_j at grid index k.
  double y_at(const Covariate& x, std::size_t k) const {
    double y = paths[0].values[k];
    for (std::size_t j = 0; j < x.size(); ++j) y += x[j] * paths[j + 1].values[k];
    return y;
  }

  double y(const Covariate& x, double t) const {
    double y = paths[0](t);
    for (std::size_t j = 0; j < x.size(); ++j) y += x[j] * paths[j + 1](t);
    return y;
  }

  static Theta constant(double omega, int d, double horizon, int level, double value = 0.0) {
    DyadicGrid g(horizon, level);
    Theta th{omega, {}};
    for (int j = 0; j <= d; ++j) th.paths.push_back(GpPath::constant(g, value, j));
    th.validate();
    return th;
  }
};

struct HazardEval {
  double y, hazard, cum_hazard, survival, density;
};

// Hazard quantities for one (theta, x), with the cumulative hazard tabulated
// by the trapezoid rule on max(grid panels, 256) uniform panels.
class HazardCurve {
 public:
  HazardCurve(const Theta&& theta, const Covariate& x) = delete;  // keeps a pointer to theta
  HazardCurve(const Theta& theta, const Covariate& x) : theta_(&theta), x_(x) {
    theta.validate();
    validate_covariate(x, theta.d());
    const auto& g = theta.grid();
    panels_ = std::max<std::size_t>(g.panels(), 256);
    h_ = g.tau / static_cast<double>(panels_);
    lam_.resize(panels_ + 1);
    cum_.resize(panels_ + 1);
    y_.resize(panels_ + 1);
    for (std::size_t i = 0; i <= panels_; ++i) {
      double t = i == panels_ ? g.tau : static_cast<double>(i) * h_;
      y_[i] = theta.y(x_, t);
      lam_[i] = theta.omega * sigmoid(y_[i]);
    }
    cum_[0] = 0;
    for (std::size_t i = 1; i <= panels_; ++i) cum_[i] = cum_[i - 1] + 0.5 * h_ * (lam_[i - 1] + lam_[i]);
    sigma_min_ = INFINITY;
    for (double v : y_) sigma_min_ = std::min(sigma_min_, sigmoid(v));
  }

  double horizon() const { return theta_->horizon(); }
  double omega() const { return theta_->omega; }
  // grid minimum of sigma(Y_x) on the refined panel nodes
  double sigma_min() const { return sigma_min_; }

  double y(double t) const {
    check(t);
    return theta_->y(x_, t);
  }
  double hazard(double t) const { return theta_->omega * sigmoid(y(t)); }
  double log_hazard(double t) const { return std::log(theta_->omega) + log_sigmoid(y(t)); }

  double cum_hazard(double t) const {
    check(t);
    double s = t / h_;
    std::size_t i = static_cast<std::size_t>(s);
    if (i >= panels_) return cum_.back();
    double dt = t - static_cast<double>(i) * h_;
    return cum_[i] + 0.5 * dt * (lam_[i] + hazard(t));
  }
  double survival(double t) const { return std::exp(-cum_hazard(t)); }
  double cdf(double t) const { return -std::expm1(-cum_hazard(t)); }
  double density(double t) const { return hazard(t) * survival(t); }
  double log_density(double t) const { return log_hazard(t) - cum_hazard(t); }

  HazardEval evaluate(double t) const {
    HazardEval e;
    e.y = y(t);
    e.hazard = theta_->omega * sigmoid(e.y);
    e.cum_hazard = cum_hazard(t);
    e.survival = std::exp(-e.cum_hazard);
    e.density = e.hazard * e.survival;
    return e;
  }

 private:
  void check(double t) const {
    if (!(t >= 0) || t > theta_->horizon() * (1 + 1e-12))
      throw DomainError("t=" + std::to_string(t) + " outside [0, " + std::to_string(theta_->horizon()) +
                        "]; extrapolation refused");
  }
  const Theta* theta_;
  Covariate x_;
  std::size_t panels_;
  double h_;
  std::vector<double> lam_, cum_, y_;
  double sigma_min_;
};

inline HazardEval evaluate(const Theta& theta, const Covariate& x, double t) {
  return HazardCurve(theta, x).evaluate(t);
}

// Thinning against the dominating rate omega, continuing from `start`.
inline std::optional<double> thin_until(const Theta& theta, const Covariate& x, double start, double horizon,
                                        Rng& rng) {
  std::exponential_distribution<double> gap(theta.omega);
  double s = start;
  for (;;) {
    s += gap(rng);
    if (s > horizon) return std::nullopt;
    if (uniform01(rng) < sigmoid(theta.y(x, s))) return s;
  }
}

inline std::optional<double> sample_time(const Theta& theta, const Covariate& x, double horizon, Rng& rng) {
  if (!(horizon > 0)) throw DomainError("sample_time: horizon must be positive");
  require(horizon <= theta.horizon() * (1 + 1e-12), "sample_time: horizon beyond theta grid");
  return thin_until(theta, x, 0.0, horizon, rng);
}

inline std::optional<double> sample_time(const Theta& theta, const Covariate& x, double horizon,
                                         std::uint64_t seed) {
  theta.validate();
  validate_covariate(x, theta.d());
  Rng rng = make_stream(seed);
  return sample_time(theta, x, horizon, rng);
}

enum class Design { RD, NRD };

inline std::string to_string(Design d) { return d == Design::RD ? "RD" : "NRD"; }
inline Design design_from_string(const std::string& s) {
  if (s == "RD" || s == "rd") return Design::RD;
  if (s == "NRD" || s == "nrd") return Design::NRD;
  throw DomainError("unknown design '" + s + "'");
}

struct CovariateLaw {
  enum class Kind { uniform, product_beta, finite_table } kind = Kind::uniform;
  int d = 1;
  std::vector<double> alpha, beta;       // product_beta, one per axis
  std::vector<Covariate> atoms;          // finite_table
  std::vector<double> atom_weights;      // finite_table, sums to 1

  static CovariateLaw uniform(int d) { return {Kind::uniform, d, {}, {}, {}, {}}; }
  static CovariateLaw product_beta(std::vector<double> a, std::vector<double> b) {
    require(a.size() == b.size() && !a.empty(), "product_beta: need matching shape vectors");
    for (std::size_t i = 0; i < a.size(); ++i) require(a[i] > 0 && b[i] > 0, "product_beta: shapes must be positive");
    return {Kind::product_beta, static_cast<int>(a.size()), std::move(a), std::move(b), {}, {}};
  }
  static CovariateLaw finite_table(std::vector<Covariate> atoms, std::vector<double> w) {
    require(!atoms.empty() && atoms.size() == w.size(), "finite_table: need matching atoms and weights");
    int d = static_cast<int>(atoms.front().size());
    double total = 0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      validate_covariate(atoms[i], d);
      require(w[i] >= 0, "finite_table: negative weight");
      total += w[i];
    }
    require(total > 0, "finite_table: weights sum to zero");
    for (double& v : w) v /= total;
    return {Kind::finite_table, d, {}, {}, std::move(atoms), std::move(w)};
  }

  Covariate draw(Rng& rng) const {
    Covariate x(static_cast<std::size_t>(d));
    switch (kind) {
      case Kind::uniform:
        for (auto& v : x) v = uniform01(rng);
        break;
      case Kind::product_beta:
        for (int j = 0; j < d; ++j) {
          double ga = std::gamma_distribution<double>(alpha[j], 1.0)(rng);
          double gb = std::gamma_distribution<double>(beta[j], 1.0)(rng);
          x[j] = ga / (ga + gb);
        }
        break;
      case Kind::finite_table: {
        std::discrete_distribution<std::size_t> pick(atom_weights.begin(), atom_weights.end());
        x = atoms[pick(rng)];
        break;
      }
    }
    return x;
  }

  std::string describe() const {
    switch (kind) {
      case Kind::uniform: return "uniform";
      case Kind::product_beta: return "product-beta";
      case Kind::finite_table: return "finite-table";
    }
    return "?";
  }
};

struct Record {
  double t;
  Covariate x;
};

struct SurvivalDataset {
  std::vector<Record> records;
  Design design = Design::RD;
  int d = 1;
  CovariateLaw law;                  // RD
  std::vector<Covariate> fixed;      // NRD: the fixed sequence (length >= n)
  double horizon = 0;                // right end used as a time knot

  std::size_t n() const { return records.size(); }
  void validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!(records[i].t > 0)) throw DomainError("record " + std::to_string(i) + ": time must be positive");
      validate_covariate(records[i].x, d);
    }
  }
};

// For NRD the law is ignored and `fixed` supplies the covariates in order.
inline SurvivalDataset generate_dataset(const Theta& theta0, std::size_t n, Design design, const CovariateLaw& law,
                                        const std::vector<Covariate>& fixed, double horizon, std::uint64_t seed) {
  if (n == 0) throw DomainError("generate_dataset: n must be positive");
  theta0.validate();
  require(horizon > 0, "generate_dataset: horizon must be positive");
  require(horizon <= theta0.horizon() * (1 + 1e-12), "generate_dataset: horizon beyond theta grid");
  if (design == Design::NRD) require(fixed.size() >= n, "generate_dataset: fixed covariate list shorter than n");
  if (design == Design::RD) require(law.d == theta0.d(), "generate_dataset: covariate law dimension mismatch");

  SurvivalDataset ds;
  ds.design = design;
  ds.d = theta0.d();
  ds.law = law;
  if (design == Design::NRD) ds.fixed.assign(fixed.begin(), fixed.begin() + static_cast<std::ptrdiff_t>(n));
  ds.records.resize(n);
  std::vector<std::uint8_t> failed(n, 0);

  parallel_for(n, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    Covariate x = design == Design::RD ? law.draw(rng) : fixed[i];
    validate_covariate(x, theta0.d());
    double h = horizon, start = 0;
    std::optional<double> t = thin_until(theta0, x, start, h, rng);
    // Censored draws continue the same thinning run past the old horizon, so
    // the record is an exact draw of T given T <= final horizon.
    for (int k = 0; !t && k < 10; ++k) {
      start = h;
      h = std::min(2 * h, theta0.horizon());
      if (h <= start) break;
      t = thin_until(theta0, x, start, h, rng);
    }
    if (!t) {
      failed[i] = 1;
      return;
    }
    ds.records[i] = {*t, std::move(x)};
  });
  for (std::size_t i = 0; i < n; ++i)
    if (failed[i])
      throw GenerationError("record " + std::to_string(i) +
                            " still censored after horizon doublings; hazard tail too heavy for the grid horizon");
  ds.horizon = horizon;
  for (std::size_t i = 0; i < n; ++i) ds.horizon = std::max(ds.horizon, std::max(ds.records[i].t, horizon));
  return ds;
}

inline SurvivalDataset generate_dataset(const Theta& theta0, std::size_t n, const CovariateLaw& law, double horizon,
                                        std::uint64_t seed) {
  return generate_dataset(theta0, n, Design::RD, law, {}, horizon, seed);
}

struct MeanHazardEstimate {
  double estimate, se, ci_halfwidth;
};

inline MeanHazardEstimate mc_mean_hazard(double omega, const std::vector<StationaryKernel>& kernels,
                                         const Covariate& x, double t, std::size_t reps, std::uint64_t seed) {
  if (!(omega > 0)) throw DomainError("mc_mean_hazard: omega must be positive");
  require(reps >= 100, "mc_mean_hazard: reps must be >= 100");
  require(!kernels.empty(), "mc_mean_hazard: need kernels for eta_0..eta_d");
  validate_covariate(x, static_cast<int>(kernels.size()) - 1);
  require(t >= 0, "mc_mean_hazard: t must be nonnegative");
  std::vector<double> vals(reps);
  parallel_for(reps, [&](std::size_t r) {
    Rng rng = make_stream(seed, r);
    double y = std::sqrt(kernels[0](0.0)) * std_normal(rng);
    for (std::size_t j = 0; j < x.size(); ++j) y += x[j] * std::sqrt(kernels[j + 1](0.0)) * std_normal(rng);
    vals[r] = omega * sigmoid(y);
  });
  double mean = 0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(reps);
  double ss = 0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  double se = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
  return {mean, se, 1.96 * se};
}

}  // namespace gpsurv
