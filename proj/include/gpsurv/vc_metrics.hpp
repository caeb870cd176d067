#pragma once

#include <algorithm>
#include <atomic>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "gpsurv/core.hpp"
#include "gpsurv/hazard_model.hpp"

namespace gpsurv {

struct Rectangle {
  double a = 0, b = 0;
  std::vector<std::pair<double, double>> box;  // one per covariate axis
  // edges are closed unless flagged; box_open is empty or one pair per axis
  bool a_open = false, b_open = false;
  std::vector<std::pair<bool, bool>> box_open;

  static bool inside(double v, double l, double u, bool lo_open, bool hi_open) {
    return (lo_open ? v > l : v >= l) && (hi_open ? v < u : v <= u);
  }
  bool lo_open_at(std::size_t j) const { return !box_open.empty() && box_open[j].first; }
  bool hi_open_at(std::size_t j) const { return !box_open.empty() && box_open[j].second; }

  bool contains(double t, const Covariate& x) const {
    if (!inside(t, a, b, a_open, b_open)) return false;
    for (std::size_t j = 0; j < box.size(); ++j)
      if (!inside(x[j], box[j].first, box[j].second, lo_open_at(j), hi_open_at(j))) return false;
    return true;
  }
};

struct GridSpec {
  std::vector<double> time_knots;
  std::vector<std::vector<double>> covariate_knots;  // one list per axis

  static GridSpec uniform(double horizon, std::size_t time_knots, int d, std::size_t cov_knots) {
    GridSpec g;
    for (std::size_t i = 0; i < time_knots; ++i)
      g.time_knots.push_back(horizon * static_cast<double>(i) / static_cast<double>(time_knots - 1));
    for (int j = 0; j < d; ++j) {
      std::vector<double> k;
      for (std::size_t i = 0; i < cov_knots; ++i) k.push_back(static_cast<double>(i) / static_cast<double>(cov_knots - 1));
      g.covariate_knots.push_back(std::move(k));
    }
    return g;
  }
};

// Q on [0,1]^d as weighted nodes. Cells spread their mass uniformly over a
// box (RD laws); atoms are point masses (finite tables and NRD sequences).
struct QuadNode {
  Covariate x;
  double w = 0;
  bool atom = false;
  std::vector<double> lo, hi;
};

struct CovariateQuadrature {
  int d = 0;
  std::vector<QuadNode> nodes;

  static int default_per_axis(int d) { return d <= 1 ? 64 : 16; }

  static CovariateQuadrature from_law(const CovariateLaw& law, int per_axis = 0) {
    CovariateQuadrature q;
    q.d = law.d;
    if (law.kind == CovariateLaw::Kind::finite_table) {
      for (std::size_t i = 0; i < law.atoms.size(); ++i)
        q.nodes.push_back({law.atoms[i], law.atom_weights[i], true, {}, {}});
      return q;
    }
    if (per_axis <= 0) per_axis = default_per_axis(law.d);
    std::size_t total = 1;
    for (int j = 0; j < law.d; ++j) total *= static_cast<std::size_t>(per_axis);
    // per-axis cell masses
    std::vector<std::vector<double>> mass(static_cast<std::size_t>(law.d), std::vector<double>(per_axis));
    for (int j = 0; j < law.d; ++j)
      for (int c = 0; c < per_axis; ++c) {
        double lo = static_cast<double>(c) / per_axis, hi = static_cast<double>(c + 1) / per_axis;
        if (law.kind == CovariateLaw::Kind::uniform)
          mass[j][c] = 1.0 / per_axis;
        else
          mass[j][c] = boost::math::ibeta(law.alpha[j], law.beta[j], hi) - boost::math::ibeta(law.alpha[j], law.beta[j], lo);
      }
    for (std::size_t flat = 0; flat < total; ++flat) {
      QuadNode nd;
      nd.w = 1.0;
      std::size_t rem = flat;
      for (int j = 0; j < law.d; ++j) {
        int c = static_cast<int>(rem % per_axis);
        rem /= per_axis;
        double lo = static_cast<double>(c) / per_axis, hi = static_cast<double>(c + 1) / per_axis;
        nd.lo.push_back(lo);
        nd.hi.push_back(hi);
        nd.x.push_back(0.5 * (lo + hi));
        nd.w *= mass[j][c];
      }
      q.nodes.push_back(std::move(nd));
    }
    if (law.d == 0) q.nodes = {QuadNode{{}, 1.0, true, {}, {}}};
    return q;
  }

  // Empirical law of a fixed sequence; repeated points are merged.
  static CovariateQuadrature from_fixed(const std::vector<Covariate>& xs, int d) {
    require(!xs.empty(), "covariate quadrature: empty fixed list");
    std::map<Covariate, double> counts;
    for (const auto& x : xs) {
      validate_covariate(x, d);
      counts[x] += 1.0;
    }
    CovariateQuadrature q;
    q.d = d;
    for (auto& [x, c] : counts) q.nodes.push_back({x, c / static_cast<double>(xs.size()), true, {}, {}});
    return q;
  }

  static CovariateQuadrature for_dataset(const SurvivalDataset& ds, int per_axis = 0) {
    if (ds.design == Design::NRD) {
      if (!ds.fixed.empty()) return from_fixed(ds.fixed, ds.d);
      std::vector<Covariate> xs;
      for (const auto& r : ds.records) xs.push_back(r.x);
      return from_fixed(xs, ds.d);
    }
    return from_law(ds.law, per_axis);
  }

  bool has_atoms() const {
    for (const auto& nd : nodes)
      if (nd.atom && nd.w > 0) return true;
    return false;
  }

  // Fraction of node mass on axis j falling between l and u.
  double coverage(const QuadNode& nd, std::size_t j, double l, double u, bool lo_open = false,
                  bool hi_open = false) const {
    if (nd.atom) return Rectangle::inside(nd.x[j], l, u, lo_open, hi_open) ? 1.0 : 0.0;
    double len = std::min(u, nd.hi[j]) - std::max(l, nd.lo[j]);
    return len > 0 ? len / (nd.hi[j] - nd.lo[j]) : 0.0;
  }
};

inline void check_rectangle(const Rectangle& r, int d, double horizon) {
  require(r.a >= 0 && r.a <= r.b, "rectangle: need 0 <= a <= b");
  if (r.b > horizon * (1 + 1e-12)) throw DomainError("rectangle exceeds horizon " + std::to_string(horizon));
  require(static_cast<int>(r.box.size()) == d, "rectangle: box dimension mismatch");
  for (auto [l, u] : r.box) require(0 <= l && l <= u && u <= 1, "rectangle: box outside [0,1]");
}

inline double measure_mu(const Theta& theta, const Rectangle& rect, const CovariateQuadrature& q) {
  theta.validate();
  check_rectangle(rect, theta.d(), theta.horizon());
  require(q.d == theta.d(), "measure_mu: quadrature dimension mismatch");
  double total = 0;
  for (const auto& nd : q.nodes) {
    double cov = nd.w;
    for (std::size_t j = 0; j < rect.box.size() && cov > 0; ++j)
      cov *= q.coverage(nd, j, rect.box[j].first, rect.box[j].second, rect.lo_open_at(j), rect.hi_open_at(j));
    if (cov == 0) continue;
    HazardCurve hc(theta, nd.x);
    total += cov * (hc.cdf(rect.b) - hc.cdf(rect.a));
  }
  return total;
}

inline double empirical_measure(const SurvivalDataset& ds, const Rectangle& rect) {
  if (ds.records.empty()) throw DomainError("empirical_measure: empty dataset");
  std::size_t k = 0;
  for (const auto& r : ds.records) k += rect.contains(r.t, r.x);
  return static_cast<double>(k) / static_cast<double>(ds.n());
}

namespace detail {

// Knot list -> "extended" positions: 2c stands for {v < knot_c}, 2c+1 for
// {v <= knot_c}. A point mass at v sits at ext_position(v); cumulative sums
// over positions then give both strict and non-strict counts.
inline std::size_t ext_position(const std::vector<double>& knots, double v) {
  auto it = std::lower_bound(knots.begin(), knots.end(), v);
  std::size_t c = static_cast<std::size_t>(it - knots.begin());
  if (c < knots.size() && knots[c] == v) return 2 * c + 1;
  return 2 * c;  // == 2C when beyond the last knot
}

inline std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Signed measure nu tabulated as Z[tb][c] = nu({t <(=) u} x {x <(=) v}).
struct CumulativeTable {
  std::vector<double> tk;
  std::vector<std::vector<double>> ck;
  std::vector<std::size_t> cdim, cstride;
  std::size_t csize = 1;
  std::vector<double> z;

  CumulativeTable(std::vector<double> time_knots, std::vector<std::vector<double>> cov_knots)
      : tk(std::move(time_knots)), ck(std::move(cov_knots)) {
    for (const auto& k : ck) {
      cstride.push_back(csize);
      cdim.push_back(2 * k.size());
      csize *= 2 * k.size();
    }
    z.assign(2 * tk.size() * csize, 0.0);
  }
  std::size_t m() const { return tk.size(); }
  double& at(std::size_t tb, std::size_t c) { return z[tb * csize + c]; }
  double at(std::size_t tb, std::size_t c) const { return z[tb * csize + c]; }

  void add_point(double t, const Covariate& x, double w) {
    std::size_t tp = ext_position(tk, t);
    if (tp >= 2 * tk.size()) return;
    std::size_t flat = 0;
    for (std::size_t j = 0; j < ck.size(); ++j) {
      std::size_t p = ext_position(ck[j], x[j]);
      if (p >= cdim[j]) return;
      flat += p * cstride[j];
    }
    at(tp, flat) += w;
  }

  void prefix_time() {
    for (std::size_t tb = 1; tb < 2 * tk.size(); ++tb)
      for (std::size_t c = 0; c < csize; ++c) z[tb * csize + c] += z[(tb - 1) * csize + c];
  }

  void prefix_cov() {
    for (std::size_t j = 0; j < ck.size(); ++j) {
      std::size_t stride = cstride[j], dim = cdim[j];
      for (std::size_t tb = 0; tb < 2 * tk.size(); ++tb) {
        double* row = &z[tb * csize];
        for (std::size_t c = 0; c < csize; ++c) {
          std::size_t pos = (c / stride) % dim;
          if (pos > 0) row[c] += row[c - stride];
        }
      }
    }
  }

  // Adds sign * mu_theta in "cumulative in time, density in covariates" form;
  // call before prefix_cov and after prefix_time.
  void add_model(const Theta& theta, const CovariateQuadrature& q, double sign) {
    require(q.d == theta.d(), "quadrature dimension mismatch");
    require(tk.back() <= theta.horizon() * (1 + 1e-12), "time knots beyond theta horizon");
    add_nodes(q, [&](const QuadNode& nd, std::vector<double>& F) {
      HazardCurve hc(theta, nd.x);
      for (std::size_t b = 0; b < tk.size(); ++b) F[b] = sign * nd.w * hc.cdf(tk[b]);
    });
  }

  // mu_A - mu_B formed per node, so swapping A and B negates every entry exactly
  void add_model_difference(const Theta& A, const Theta& B, const CovariateQuadrature& q) {
    require(q.d == A.d() && q.d == B.d(), "quadrature dimension mismatch");
    require(tk.back() <= std::min(A.horizon(), B.horizon()) * (1 + 1e-12), "time knots beyond theta horizon");
    add_nodes(q, [&](const QuadNode& nd, std::vector<double>& F) {
      HazardCurve ha(A, nd.x), hb(B, nd.x);
      for (std::size_t b = 0; b < tk.size(); ++b) F[b] = nd.w * (ha.cdf(tk[b]) - hb.cdf(tk[b]));
    });
  }

  template <class NodeCdf>
  void add_nodes(const CovariateQuadrature& q, NodeCdf&& node_cdf) {
    std::vector<double> F(tk.size());
    for (const auto& nd : q.nodes) {
      // sparse first differences of the per-axis cumulative coverage
      std::vector<std::vector<std::pair<std::size_t, double>>> deltas(ck.size());
      bool empty = false;
      for (std::size_t j = 0; j < ck.size(); ++j) {
        if (nd.atom) {
          std::size_t p = ext_position(ck[j], nd.x[j]);
          if (p < cdim[j]) deltas[j].push_back({p, 1.0});
        } else {
          double prev = 0;
          for (std::size_t e = 0; e < cdim[j]; ++e) {
            double v = ck[j][e / 2];
            double cum = std::clamp((v - nd.lo[j]) / (nd.hi[j] - nd.lo[j]), 0.0, 1.0);
            if (cum != prev) deltas[j].push_back({e, cum - prev});
            prev = cum;
          }
        }
        empty = empty || deltas[j].empty();
      }
      if (empty || nd.w == 0) continue;
      node_cdf(nd, F);
      // walk the product of the sparse lists
      std::vector<std::size_t> idx(ck.size(), 0);
      for (;;) {
        std::size_t flat = 0;
        double coef = 1;
        for (std::size_t j = 0; j < ck.size(); ++j) {
          flat += deltas[j][idx[j]].first * cstride[j];
          coef *= deltas[j][idx[j]].second;
        }
        for (std::size_t b = 0; b < tk.size(); ++b) {
          double v = coef * F[b];
          z[(2 * b) * csize + flat] += v;
          z[(2 * b + 1) * csize + flat] += v;
        }
        std::size_t j = 0;
        while (j < ck.size() && ++idx[j] == deltas[j].size()) idx[j++] = 0;
        if (j == ck.size()) break;
      }
    }
  }
};

// A box is, per axis, an upper cut minus a lower cut, both given as extended
// positions with lower < upper. Its signed mass at time position e comes from
// 2^d corner lookups.
struct BoxCorner {
  std::size_t flat;
  double sign;
};

struct ScanResult {
  double value = -INFINITY;
  std::size_t a = 0, b = 0;                 // extended time positions, a < b
  std::vector<std::size_t> box_lo, box_hi;  // extended covariate positions
  bool complete = true;
};

inline std::vector<BoxCorner> box_corners(const CumulativeTable& T, const std::vector<std::size_t>& lo,
                                          const std::vector<std::size_t>& hi) {
  std::size_t d = T.ck.size();
  std::vector<BoxCorner> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    std::size_t flat = 0;
    double sign = 1;
    for (std::size_t j = 0; j < d; ++j) {
      if (mask >> j & 1) {
        flat += lo[j] * T.cstride[j];
        sign = -sign;
      } else {
        flat += hi[j] * T.cstride[j];
      }
    }
    out.push_back({flat, sign});
  }
  return out;
}

// Max over time position pairs a < b of |S(b) - S(a)| for one box.
inline void scan_box(const CumulativeTable& T, const std::vector<BoxCorner>& corners, std::vector<double>& S,
                     double& best, std::size_t& ba, std::size_t& bb) {
  const std::size_t E = 2 * T.m();
  for (std::size_t e = 0; e < E; ++e) {
    double v = 0;
    for (const auto& c : corners) v += c.sign * T.at(e, c.flat);
    S[e] = v;
  }
  double mn = S[0], mx = S[0];
  std::size_t amn = 0, amx = 0;
  for (std::size_t e = 1; e < E; ++e) {
    if (S[e] - mn > best) { best = S[e] - mn; ba = amn; bb = e; }
    if (mx - S[e] > best) { best = mx - S[e]; ba = amx; bb = e; }
    if (S[e] < mn) { mn = S[e]; amn = e; }
    if (S[e] > mx) { mx = S[e]; amx = e; }
  }
}

// Calls f for every box whose first-axis lower cut is first_lo.
inline void enumerate_boxes(const CumulativeTable& T, std::size_t first_lo,
                            const std::function<void(const std::vector<std::size_t>&, const std::vector<std::size_t>&)>& f) {
  std::size_t d = T.ck.size();
  std::vector<std::size_t> lo(d, 0), hi(d, 0);
  if (d == 0) {
    f(lo, hi);
    return;
  }
  lo[0] = first_lo;
  std::function<void(std::size_t)> rec = [&](std::size_t j) {
    if (j == d) {
      f(lo, hi);
      return;
    }
    std::size_t E = T.cdim[j];
    if (j == 0) {
      for (hi[0] = first_lo + 1; hi[0] < E; ++hi[0]) rec(1);
      return;
    }
    for (lo[j] = 0; lo[j] < E; ++lo[j])
      for (hi[j] = lo[j] + 1; hi[j] < E; ++hi[j]) rec(j + 1);
  };
  rec(0);
}

// Every open/closed combination on every edge; exact for any quadrature.
inline ScanResult scan_generic(const CumulativeTable& T) {
  std::size_t d = T.ck.size();
  std::size_t outer = d == 0 ? 1 : T.cdim[0];
  std::vector<ScanResult> part(outer);
  parallel_for(outer, [&](std::size_t c0) {
    std::vector<double> S(2 * T.m());
    ScanResult& r = part[c0];
    enumerate_boxes(T, c0, [&](const std::vector<std::size_t>& lo, const std::vector<std::size_t>& hi) {
      auto corners = box_corners(T, lo, hi);
      double best = r.value;
      std::size_t a = 0, b = 0;
      scan_box(T, corners, S, best, a, b);
      if (best > r.value) {
        r.value = best;
        r.a = a;
        r.b = b;
        r.box_lo = lo;
        r.box_hi = hi;
      }
    });
  });
  ScanResult out;
  for (auto& r : part)
    if (r.value > out.value) out = r;
  return out;
}

// d = 1 with an atomless covariate law. Where the data exceed the model the
// best rectangle can be taken closed at data points, and where the model
// exceeds the data it can be taken open, so two one-sided scans suffice.
// Vectorised over the upper covariate knot, blocked over the lower one, in
// single precision; the winning box is rescanned in double.
inline ScanResult scan_d1_fast(const CumulativeTable& T, std::optional<double> stop_above) {
  const std::size_t m = T.m(), C = T.ck[0].size();
  // closed side: time [t_a, t_b], box [k_c, k_e]; open side: (t_a, t_b), (k_c, k_e)
  std::vector<float> cM_u(m * C), cM_l(m * C), cP_u(m * C), cP_l(m * C);
  std::vector<float> oM_u(m * C), oM_l(m * C), oP_u(m * C), oP_l(m * C);
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t i = b * C + c;
      cM_u[i] = static_cast<float>(T.at(2 * b, 2 * c + 1));
      cM_l[i] = static_cast<float>(T.at(2 * b, 2 * c));
      cP_u[i] = static_cast<float>(T.at(2 * b + 1, 2 * c + 1));
      cP_l[i] = static_cast<float>(T.at(2 * b + 1, 2 * c));
      oM_u[i] = static_cast<float>(T.at(2 * b + 1, 2 * c));
      oM_l[i] = static_cast<float>(T.at(2 * b + 1, 2 * c + 1));
      oP_u[i] = static_cast<float>(T.at(2 * b, 2 * c));
      oP_l[i] = static_cast<float>(T.at(2 * b, 2 * c + 1));
    }
  constexpr std::size_t B = 16;
  const std::size_t nblocks = (C + B - 1) / B;
  struct BlockBest {
    float v = -INFINITY;
    std::size_t c = 0, e = 0;
    bool open = false;
    bool done = false;
  };
  std::vector<BlockBest> blocks(nblocks);
  std::atomic<bool> stop{false};

  parallel_for(nblocks, [&](std::size_t blk) {
    if (stop.load(std::memory_order_relaxed)) return;
    const std::size_t c0 = blk * B, c1 = std::min(C, c0 + B), nb = c1 - c0, W = C - c0;
    std::vector<float> mn(nb * W, INFINITY), bc(nb * W, -INFINITY), mx(nb * W, -INFINITY), bo(nb * W, -INFINITY);
    // R time rows per pass keep the running state in registers between rows
    auto pass = [&]<std::size_t R>(std::size_t b0, std::integral_constant<std::size_t, R>) {
      const float* cmu[R];
      const float* cpu[R];
      const float* opu[R];
      const float* omu[R];
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t row = (b0 + r) * C + c0;
        cmu[r] = &cM_u[row];
        cpu[r] = &cP_u[row];
        opu[r] = &oP_u[row];
        omu[r] = &oM_u[row];
      }
      for (std::size_t i = 0; i < nb; ++i) {
        float cml[R], cpl[R], opl[R], oml[R];
        for (std::size_t r = 0; r < R; ++r) {
          const std::size_t row = (b0 + r) * C + c0 + i;
          cml[r] = cM_l[row];
          cpl[r] = cP_l[row];
          opl[r] = oP_l[row];
          oml[r] = oM_l[row];
        }
        float* __restrict pmn = &mn[i * W];
        float* __restrict pbc = &bc[i * W];
        float* __restrict pmx = &mx[i * W];
        float* __restrict pbo = &bo[i * W];
#pragma GCC ivdep
        for (std::size_t w = 0; w < W; ++w) {
          float lo = pmn[w], best_c = pbc[w], hi = pmx[w], best_o = pbo[w];
          for (std::size_t r = 0; r < R; ++r) {
            // closed: min over a <= b of S(t < t_a), then S(t <= t_b) minus it
            float q = cmu[r][w] - cml[r];
            lo = q < lo ? q : lo;
            float v = (cpu[r][w] - cpl[r]) - lo;
            best_c = v > best_c ? v : best_c;
            // open: max over a < b of S(t <= t_a) minus S(t < t_b)
            float u = hi - (opu[r][w] - opl[r]);
            best_o = u > best_o ? u : best_o;
            float q2 = omu[r][w] - oml[r];
            hi = q2 > hi ? q2 : hi;
          }
          pmn[w] = lo;
          pbc[w] = best_c;
          pmx[w] = hi;
          pbo[w] = best_o;
        }
      }
    };
    std::size_t b = 0;
    for (; b + 4 <= m; b += 4) pass(b, std::integral_constant<std::size_t, 4>{});
    for (; b < m; ++b) pass(b, std::integral_constant<std::size_t, 1>{});
    BlockBest bb;
    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t w = i; w < W; ++w)
        if (bc[i * W + w] > bb.v) bb = {bc[i * W + w], c0 + i, c0 + w, false, false};
      for (std::size_t w = i + 1; w < W; ++w)
        if (bo[i * W + w] > bb.v) bb = {bo[i * W + w], c0 + i, c0 + w, true, false};
    }
    bb.done = true;
    blocks[blk] = bb;
    if (stop_above && bb.v > *stop_above) stop.store(true, std::memory_order_relaxed);
  });

  BlockBest top;
  bool complete = true;
  for (const auto& bb : blocks) {
    complete = complete && bb.done;
    if (bb.done && bb.v > top.v) top = bb;
  }
  ScanResult r;
  r.box_lo = {top.open ? 2 * top.c + 1 : 2 * top.c};
  r.box_hi = {top.open ? 2 * top.e : 2 * top.e + 1};
  std::vector<double> S(2 * m);
  double best = -INFINITY;
  scan_box(T, box_corners(T, r.box_lo, r.box_hi), S, best, r.a, r.b);
  r.value = best;
  r.complete = complete;
  return r;
}

inline Rectangle rectangle_of(const CumulativeTable& T, const ScanResult& s) {
  // lower cut 2c removes {v < k_c} (closed edge), 2c+1 removes {v <= k_c} (open);
  // upper cut 2c keeps {v < k_c} (open), 2c+1 keeps {v <= k_c} (closed)
  Rectangle r;
  r.a = T.tk[s.a / 2];
  r.a_open = s.a % 2 == 1;
  r.b = T.tk[s.b / 2];
  r.b_open = s.b % 2 == 0;
  for (std::size_t j = 0; j < T.ck.size(); ++j) {
    r.box.push_back({T.ck[j][s.box_lo[j] / 2], T.ck[j][s.box_hi[j] / 2]});
    r.box_open.push_back({s.box_lo[j] % 2 == 1, s.box_hi[j] % 2 == 0});
  }
  return r;
}

inline double pair_count(std::size_t k) { return 0.5 * static_cast<double>(k) * static_cast<double>(k + 1); }

}  // namespace detail

struct MetricResult {
  double value = 0;
  Rectangle argmax_rect;
};

inline MetricResult sup_deviation_metric(const Theta& A, const Theta& B, const CovariateQuadrature& q,
                                         const GridSpec& grid, double max_rectangles = 1e7) {
  A.validate();
  B.validate();
  require(A.d() == B.d() && q.d == A.d(), "sup_deviation_metric: dimension mismatch");
  require(A.d() <= 2, "sup_deviation_metric: d <= 2 supported");
  require(grid.time_knots.size() >= 2, "GridSpec: need >= 2 time knots");
  require(static_cast<int>(grid.covariate_knots.size()) == A.d(), "GridSpec: covariate axes mismatch");
  auto tk = detail::sorted_unique(grid.time_knots);
  require(tk.front() >= 0, "GridSpec: negative time knot");
  if (tk.back() > std::min(A.horizon(), B.horizon()) * (1 + 1e-12))
    throw DomainError("GridSpec: time knots beyond horizon");
  std::vector<std::vector<double>> ck;
  double rects = detail::pair_count(tk.size());
  for (const auto& k : grid.covariate_knots) {
    require(k.size() >= 2, "GridSpec: need >= 2 knots per covariate axis");
    auto u = detail::sorted_unique(k);
    require(u.front() >= 0 && u.back() <= 1, "GridSpec: covariate knots outside [0,1]");
    rects *= detail::pair_count(u.size());
    ck.push_back(std::move(u));
  }
  if (rects > max_rectangles)
    throw CapacityError("sup_deviation_metric: " + std::to_string(static_cast<long long>(rects)) +
                        " rectangles exceed the limit; use a coarser grid");
  detail::CumulativeTable T(tk, ck);
  T.add_model_difference(A, B, q);
  T.prefix_cov();
  auto s = detail::scan_generic(T);
  MetricResult r;
  r.value = std::max(0.0, s.value);
  r.argmax_rect = detail::rectangle_of(T, s);
  return r;
}

struct TestStatOptions {
  int per_axis = 0;                  // RD quadrature cells per axis (0 = default)
  bool decision_only = false;        // stop once sup_dev is known to exceed epsilon/4
  double max_work = 6e10;            // boxes x time knots
};

struct TestStatResult {
  double sup_dev = 0;
  int phi = 0;
  Rectangle argmax_rect;
  bool complete = true;  // false when decision_only stopped early; sup_dev is then a lower bound
};

inline TestStatResult test_statistic(const SurvivalDataset& ds, const Theta& theta0, const CovariateQuadrature& q,
                                     double epsilon, const TestStatOptions& opt = {}) {
  if (ds.n() == 0) throw DomainError("test_statistic: empty dataset");
  require(epsilon > 0, "test_statistic: epsilon must be positive");
  ds.validate();
  theta0.validate();
  require(ds.d == theta0.d() && q.d == ds.d, "test_statistic: dimension mismatch");
  require(ds.d <= 2, "test_statistic: d <= 2 supported");

  double horizon = ds.horizon;
  std::vector<double> ts{0.0};
  for (const auto& r : ds.records) {
    ts.push_back(r.t);
    horizon = std::max(horizon, r.t);
  }
  ts.push_back(horizon);
  if (horizon > theta0.horizon() * (1 + 1e-12))
    throw DomainError("test_statistic: data horizon " + std::to_string(horizon) + " beyond theta0 grid horizon");
  auto tk = detail::sorted_unique(ts);
  std::vector<std::vector<double>> ck(static_cast<std::size_t>(ds.d));
  for (int j = 0; j < ds.d; ++j) {
    std::vector<double> v{0.0, 1.0};
    for (const auto& r : ds.records) v.push_back(r.x[j]);
    ck[j] = detail::sorted_unique(v);
  }
  const bool fast = ds.d == 1 && !q.has_atoms();
  double work = static_cast<double>(tk.size()) * (fast ? 1.0 : 2.0);
  for (const auto& k : ck) work *= fast ? detail::pair_count(k.size()) : detail::pair_count(2 * k.size() - 1);
  if (work > opt.max_work)
    throw CapacityError("test_statistic: anchored enumeration too large (" + std::to_string(work) + " box-knot pairs)");

  detail::CumulativeTable T(tk, ck);
  const double w = 1.0 / static_cast<double>(ds.n());
  for (const auto& r : ds.records) T.add_point(r.t, r.x, w);
  T.prefix_time();
  T.add_model(theta0, q, -1.0);
  T.prefix_cov();

  std::optional<double> stop;
  if (opt.decision_only) stop = epsilon / 4;
  auto s = fast ? detail::scan_d1_fast(T, stop) : detail::scan_generic(T);
  TestStatResult res;
  res.sup_dev = std::max(0.0, s.value);
  res.phi = res.sup_dev > epsilon / 4 ? 1 : 0;
  res.argmax_rect = detail::rectangle_of(T, s);
  res.complete = s.complete;
  return res;
}

struct ShatterBound {
  double value;      // +inf when it overflows a double
  double log_value;
  bool overflow;
};

inline ShatterBound shatter_bound(long long n, int d) {
  if (n < 1) throw DomainError("shatter_bound: n must be >= 1");
  require(d >= 0, "shatter_bound: d must be nonnegative");
  double lv = 2.0 * (d + 1) * std::log(static_cast<double>(n) + 1.0);
  bool over = lv > std::log(std::numeric_limits<double>::max());
  double v = over ? INFINITY : std::round(std::exp(lv));
  if (!over && lv < 52 * std::log(2.0)) {
    // exact integer power when it fits in the mantissa
    double p = 1;
    for (int i = 0; i < 2 * (d + 1); ++i) p *= static_cast<double>(n + 1);
    v = p;
  }
  return {v, lv, over};
}

struct DeviationBounds {
  double expected_dev_bound;
  double type1_bound;
};

inline DeviationBounds deviation_bounds(long long n, int d, double epsilon) {
  require(n >= 1, "deviation_bounds: n must be >= 1");
  require(epsilon > 0, "deviation_bounds: epsilon must be positive");
  double ls = std::log(2.0) + shatter_bound(n, d).log_value;
  double nn = static_cast<double>(n);
  return {2.0 * std::sqrt(ls / nn), 2.0 * std::exp(-nn * epsilon * epsilon / 2.0)};
}

}  // namespace gpsurv
