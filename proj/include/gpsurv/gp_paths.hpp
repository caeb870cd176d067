#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gpsurv/core.hpp"
#include "gpsurv/kernels.hpp"

namespace gpsurv {

struct DyadicGrid {
  double tau = 1.0;
  int level = 0;

  DyadicGrid() = default;
  DyadicGrid(double tau_, int level_) : tau(tau_), level(level_) {
    require(tau > 0, "DyadicGrid: tau must be positive");
    require(level >= 0 && level <= 24, "DyadicGrid: level out of range");
  }
  std::size_t size() const { return (std::size_t{1} << level) + 1; }
  std::size_t panels() const { return std::size_t{1} << level; }
  double spacing() const { return tau / static_cast<double>(panels()); }
  double t(std::size_t k) const { return k == panels() ? tau : static_cast<double>(k) * spacing(); }
  std::vector<double> points() const {
    std::vector<double> p(size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = t(k);
    return p;
  }
  bool operator==(const DyadicGrid& o) const { return tau == o.tau && level == o.level; }
};

enum class Interpolation { linear };

struct GpPath {
  DyadicGrid grid;
  std::vector<double> values;
  int kernel_id = -1;
  Interpolation interpolation = Interpolation::linear;

  double operator()(double t) const {
    require(t >= 0 && t <= grid.tau * (1 + 1e-12), "GpPath: evaluation outside [0, tau]");
    if (values.size() == 1) return values[0];
    double s = t / grid.spacing();
    std::size_t k = static_cast<std::size_t>(s);
    if (k >= grid.panels()) return values.back();
    double w = s - static_cast<double>(k);
    return values[k] + w * (values[k + 1] - values[k]);
  }

  void validate() const {
    require(values.size() == grid.size(), "GpPath: value count does not match grid");
    for (double v : values)
      if (!std::isfinite(v)) throw DomainError("GpPath: non-finite value");
  }

  static GpPath constant(const DyadicGrid& g, double v, int kernel_id = -1) {
    return {g, std::vector<double>(g.size(), v), kernel_id, Interpolation::linear};
  }
};

// Cholesky factor of k(|t_i - t_j|) with the jitter schedule 1e-10 k(0), x10 up to 3 times.
inline Eigen::MatrixXd covariance_factor(const StationaryKernel& kernel, const std::vector<double>& ts) {
  const Eigen::Index n = static_cast<Eigen::Index>(ts.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) cov(i, j) = cov(j, i) = kernel(std::abs(ts[i] - ts[j]));
  double jitter = 1e-10 * kernel.variance;
  for (int attempt = 0; attempt <= 3; ++attempt, jitter *= 10) {
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericError("covariance factorization failed after 3 jitter escalations (n=" + std::to_string(n) + ")");
}

class PathSampler {
 public:
  PathSampler(const StationaryKernel& kernel, std::vector<double> times)
      : times_(std::move(times)), L_(covariance_factor(kernel, times_)), z_(L_.rows()) {}

  const std::vector<double>& times() const { return times_; }

  void draw(Rng& rng, std::vector<double>& out) {
    for (Eigen::Index i = 0; i < z_.size(); ++i) z_[i] = std_normal(rng);
    Eigen::VectorXd v = L_.triangularView<Eigen::Lower>() * z_;
    out.assign(v.data(), v.data() + v.size());
  }

 private:
  std::vector<double> times_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd z_;
};

inline GpPath sample_path(const StationaryKernel& kernel, const DyadicGrid& grid, std::uint64_t seed,
                          int kernel_id = 0) {
  PathSampler sampler(kernel, grid.points());
  Rng rng = make_stream(seed);
  GpPath p{grid, {}, kernel_id, Interpolation::linear};
  sampler.draw(rng, p.values);
  return p;
}

inline double h_weight(int d, double t) {
  require(d >= 0, "h_weight: d must be nonnegative");
  require(t >= 0, "h_weight: t must be nonnegative");
  double s = std::max(t, 1.0);
  double denom = s + std::log1p(-std::exp(-s));
  return (d + 1) / denom;
}

inline GpPath transform_hat(const GpPath& path, int d) {
  GpPath out = path;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] *= h_weight(d, path.grid.t(k));
  return out;
}

inline double dyadic_sup_bound(const GpPath& path, int max_level) {
  require(max_level >= 1, "dyadic_sup_bound: max_level must be positive");
  if (max_level > path.grid.level)
    throw DomainError("dyadic_sup_bound: max_level " + std::to_string(max_level) + " exceeds grid level " +
                      std::to_string(path.grid.level));
  const auto& v = path.values;
  double bound = std::abs(v.front()) + std::abs(v.back());
  for (int n = 1; n <= max_level; ++n) {
    std::size_t stride = std::size_t{1} << (path.grid.level - n);
    double m = 0;
    for (std::size_t k = 0; k + stride < v.size(); k += stride) m = std::max(m, std::abs(v[k + stride] - v[k]));
    bound += m;
  }
  return bound;
}

enum class Sense { at_most, at_least };

struct SupConstraint {
  double a = 0, b = 1;
  bool left_open = false;
  double threshold = INFINITY;
  Sense sense = Sense::at_most;

  bool contains(double t, double tol) const {
    bool lo = left_open ? t > a + tol : t >= a - tol;
    return lo && t <= b + tol;
  }
};

struct EventEstimate {
  double p_joint = 0;
  std::vector<double> p_marginals;
  double se = 0;
  double ci_halfwidth = 0;
  std::size_t reps = 0;
};

inline EventEstimate mc_event_probability(const StationaryKernel& kernel, int d, bool weighted,
                                          const std::vector<SupConstraint>& constraints, double horizon, int level,
                                          std::size_t reps, std::uint64_t seed) {
  if (constraints.empty()) throw DomainError("mc_event_probability: empty constraint list");
  require(reps >= 100, "mc_event_probability: reps must be >= 100");
  DyadicGrid grid(horizon, level);
  const double tol = 1e-12 * horizon;
  for (const auto& c : constraints)
    require(c.a >= 0 && c.a <= c.b && c.b <= horizon + tol, "mc_event_probability: interval outside [0, horizon]");

  // Only grid points that some constraint looks at are sampled; the marginal
  // of a Gaussian vector on a subset is exact.
  std::vector<double> times, weights;
  std::vector<std::vector<std::size_t>> members(constraints.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double t = grid.t(k);
    bool used = false;
    for (std::size_t c = 0; c < constraints.size(); ++c)
      if (constraints[c].contains(t, tol)) {
        members[c].push_back(times.size());
        used = true;
      }
    if (used) {
      times.push_back(t);
      weights.push_back(weighted ? h_weight(d, t) : 1.0);
    }
  }

  std::vector<std::uint8_t> joint(reps);
  std::vector<std::vector<std::uint8_t>> marg(constraints.size(), std::vector<std::uint8_t>(reps));
  if (!times.empty()) {
    Eigen::MatrixXd L = covariance_factor(kernel, times);
    parallel_for(reps, [&](std::size_t r) {
      Rng rng = make_stream(seed, r);
      Eigen::VectorXd z(L.rows());
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
      Eigen::VectorXd v = L.triangularView<Eigen::Lower>() * z;
      bool all = true;
      for (std::size_t c = 0; c < constraints.size(); ++c) {
        double sup = members[c].empty() ? 0.0 : -INFINITY;
        for (std::size_t i : members[c]) sup = std::max(sup, std::abs(v[static_cast<Eigen::Index>(i)]) * weights[i]);
        bool ok = constraints[c].sense == Sense::at_most ? sup <= constraints[c].threshold
                                                         : sup >= constraints[c].threshold;
        marg[c][r] = ok;
        all = all && ok;
      }
      joint[r] = all;
    });
  } else {
    // no grid point inside any interval: every sup is over an empty set, taken as 0
    for (std::size_t c = 0; c < constraints.size(); ++c) {
      bool ok = constraints[c].sense == Sense::at_most ? 0.0 <= constraints[c].threshold
                                                       : 0.0 >= constraints[c].threshold;
      std::fill(marg[c].begin(), marg[c].end(), ok);
    }
    for (std::size_t r = 0; r < reps; ++r) {
      bool all = true;
      for (auto& m : marg) all = all && m[r];
      joint[r] = all;
    }
  }

  EventEstimate est;
  est.reps = reps;
  auto mean = [&](const std::vector<std::uint8_t>& xs) {
    std::size_t s = 0;
    for (auto x : xs) s += x;
    return static_cast<double>(s) / static_cast<double>(reps);
  };
  est.p_joint = mean(joint);
  for (auto& m : marg) est.p_marginals.push_back(mean(m));
  est.se = std::sqrt(est.p_joint * (1 - est.p_joint) / static_cast<double>(reps));
  est.ci_halfwidth = 1.96 * est.se;
  return est;
}

}  // namespace gpsurv
