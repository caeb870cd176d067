#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gpsurv/core.hpp"

namespace gpsurv {

enum class KernelKind { squared_exponential, ornstein_uhlenbeck, tabulated };

struct StationaryKernel {
  KernelKind kind = KernelKind::squared_exponential;
  double lengthscale = 1.0;
  double variance = 1.0;
  // tabulated kind only: samples (t, k(t)) with t[0] = 0
  std::vector<double> tab_t, tab_k;

  static StationaryKernel se(double ell, double var = 1.0) {
    require(ell > 0 && var > 0, "kernel: lengthscale and variance must be positive");
    return {KernelKind::squared_exponential, ell, var, {}, {}};
  }
  static StationaryKernel ou(double ell, double var = 1.0) {
    require(ell > 0 && var > 0, "kernel: lengthscale and variance must be positive");
    return {KernelKind::ornstein_uhlenbeck, ell, var, {}, {}};
  }
  static StationaryKernel tabulated(std::vector<double> t, std::vector<double> k) {
    require(t.size() >= 2 && t.size() == k.size(), "tabulated kernel: need >= 2 matching samples");
    require(t.front() == 0.0, "tabulated kernel: first sample must be at t = 0");
    for (std::size_t i = 1; i < t.size(); ++i)
      require(t[i] > t[i - 1], "tabulated kernel: sample times must increase");
    require(k.front() > 0, "tabulated kernel: k(0) must be positive");
    for (double v : k) require(v >= 0 && v <= k.front(), "tabulated kernel: values must lie in [0, k(0)]");
    StationaryKernel out{KernelKind::tabulated, 1.0, k.front(), std::move(t), std::move(k)};
    return out;
  }

  // k(0) - k(t), computed without cancellation for the closed-form kinds
  double decrement(double t) const {
    require(t >= 0, "kernel: negative lag");
    switch (kind) {
      case KernelKind::squared_exponential:
        return -variance * std::expm1(-(t * t) / (lengthscale * lengthscale));
      case KernelKind::ornstein_uhlenbeck:
        return -variance * std::expm1(-t / lengthscale);
      case KernelKind::tabulated:
        return variance - (*this)(t);
    }
    return 0.0;
  }

  double operator()(double t) const {
    require(t >= 0, "kernel: negative lag");
    switch (kind) {
      case KernelKind::squared_exponential:
        return variance * std::exp(-(t * t) / (lengthscale * lengthscale));
      case KernelKind::ornstein_uhlenbeck:
        return variance * std::exp(-t / lengthscale);
      case KernelKind::tabulated: {
        if (t >= tab_t.back()) return tab_k.back();
        auto it = std::upper_bound(tab_t.begin(), tab_t.end(), t);
        std::size_t j = static_cast<std::size_t>(it - tab_t.begin());
        double w = (t - tab_t[j - 1]) / (tab_t[j] - tab_t[j - 1]);
        return tab_k[j - 1] + w * (tab_k[j] - tab_k[j - 1]);
      }
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case KernelKind::squared_exponential: return "se";
      case KernelKind::ornstein_uhlenbeck: return "ou";
      case KernelKind::tabulated: return "tabulated";
    }
    return "?";
  }
};

inline double eval(const StationaryKernel& k, double t) { return k(t); }

struct A1Entry {
  int n;
  double decrement;
  double inverse;  // +inf when degenerate
  double required;
  bool degenerate;
  bool pass;
};

struct A1Report {
  std::vector<A1Entry> entries;
  bool all_pass = true;
  std::vector<int> failing() const {
    std::vector<int> out;
    for (const auto& e : entries)
      if (!e.pass) out.push_back(e.n);
    return out;
  }
};

inline A1Report check_a1(const StationaryKernel& k, int n_max = 40) {
  require(n_max >= 1, "check_a1: n_max must be >= 1");
  A1Report rep;
  for (int n = 1; n <= n_max; ++n) {
    A1Entry e{};
    e.n = n;
    e.decrement = k.decrement(std::ldexp(1.0, -n));
    e.required = std::pow(static_cast<double>(n), 6);
    e.degenerate = !(e.decrement > 0) || !std::isfinite(e.decrement);
    e.inverse = e.degenerate ? INFINITY : 1.0 / e.decrement;
    e.pass = !e.degenerate && e.inverse >= e.required;
    rep.all_pass = rep.all_pass && e.pass;
    rep.entries.push_back(e);
  }
  return rep;
}

struct SublinearReport {
  std::vector<std::pair<double, double>> ratios;  // (T, int_0^T k / T)
  bool pass = false;
};

inline SublinearReport check_sublinear_integral(const StationaryKernel& k, const std::vector<double>& horizons,
                                                std::size_t panels = 1u << 14) {
  require(!horizons.empty(), "check_sublinear_integral: no horizons");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    require(horizons[i] > 0, "check_sublinear_integral: horizons must be positive");
    if (i) require(horizons[i] > horizons[i - 1], "check_sublinear_integral: horizons must increase");
  }
  SublinearReport rep;
  for (double T : horizons) {
    double integral = simpson([&](double t) { return k(t); }, 0.0, T, panels);
    if (!std::isfinite(integral)) throw NumericError("check_sublinear_integral: non-finite quadrature at T=" + std::to_string(T));
    rep.ratios.emplace_back(T, integral / T);
  }
  bool nonincreasing = true;
  for (std::size_t i = 1; i < rep.ratios.size(); ++i)
    nonincreasing = nonincreasing && rep.ratios[i].second <= rep.ratios[i - 1].second;
  rep.pass = nonincreasing && rep.ratios.back().second < rep.ratios.front().second;
  return rep;
}

// Two-column CSV (t, k) with a header row.
inline StationaryKernel load_tabulated_kernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open kernel table: " + path);
  std::string line;
  std::getline(in, line);
  std::vector<double> ts, ks;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double t, v;
    if (!(ss >> t >> v)) throw DomainError(path + ": malformed row " + std::to_string(row));
    ts.push_back(t);
    ks.push_back(v);
  }
  return StationaryKernel::tabulated(std::move(ts), std::move(ks));
}

}  // namespace gpsurv
