#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "hetnet/netmodel.hpp"
#include "hetnet/types.hpp"

namespace hetnet {

// Sum of log-rates as a function of the PSD vector, association fixed.
// -inf when some serving BS transmits nothing.
inline double power_objective(const NetworkInstance& inst, const Association& assoc,
                              const Eigen::VectorXd& p) {
  return network_utility(inst, assoc, p);
}

namespace detail {

struct PerUserSinrTerms {
  double s = 0.0;      // SINR of the user at its serving BS
  double r = 0.0;      // ln(1 + s / gap)
  double own = 0.0;    // g_im * p_m
  int serving = 0;
};

inline std::vector<PerUserSinrTerms> sinr_terms(const NetworkInstance& inst,
                                                const Association& assoc,
                                                const Eigen::VectorXd& p) {
  std::vector<PerUserSinrTerms> t(inst.num_users);
  for (int i = 0; i < inst.num_users; ++i) {
    int m = assoc.bs_of[i];
    double total = 0.0;
    for (int l = 0; l < inst.num_bs; ++l) total += inst.gain(i, l) * p(l);
    double own = inst.gain(i, m) * p(m);
    double denom = std::max(total - own, 0.0) + inst.noise_psd_mw;
    t[i].s = own / denom;
    t[i].r = std::log1p(t[i].s / inst.snr_gap);
    t[i].own = own;
    t[i].serving = m;
  }
  return t;
}

}  // namespace detail

// Exact gradient of the objective.  Per served user with SINR s and
// r = ln(1+s/gap): the serving BS gains s/(r (gap+s) p_m), every interfering
// BS j loses g_ij s^2 / (g_im p_m r (gap+s)).
inline Eigen::VectorXd power_gradient(const NetworkInstance& inst, const Association& assoc,
                                      const Eigen::VectorXd& p) {
  const double gap = inst.snr_gap;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(inst.num_bs);
  auto terms = detail::sinr_terms(inst, assoc, p);
  for (int i = 0; i < inst.num_users; ++i) {
    const auto& t = terms[i];
    int m = t.serving;
    double self = t.s / (t.r * (gap + t.s) * p(m));
    double leak = t.s * t.s / (t.own * t.r * (gap + t.s));  // times g_ij per BS
    for (int j = 0; j < inst.num_bs; ++j) grad(j) -= leak * inst.gain(i, j);
    grad(m) += self + leak * inst.gain(i, m);
  }
  return grad;
}

// Diagonal of the Hessian.  Self term is strictly negative, cross terms per
// interfering BS carry the factor s^3 (2 r gap + s (r - 1)) / (r^2 (gap+s)^2)
// scaled by (g_ij / (g_im p_m))^2.
inline Eigen::VectorXd power_hessian_diag(const NetworkInstance& inst, const Association& assoc,
                                          const Eigen::VectorXd& p) {
  const double gap = inst.snr_gap;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(inst.num_bs);
  auto terms = detail::sinr_terms(inst, assoc, p);
  for (int i = 0; i < inst.num_users; ++i) {
    const auto& t = terms[i];
    int m = t.serving;
    double r2 = t.r * t.r;
    double gs2 = (gap + t.s) * (gap + t.s);
    double self = -(1.0 / r2 + 1.0 / t.r) * t.s * t.s / (gs2 * p(m) * p(m));
    double cross = t.s * t.s * t.s * (2.0 * t.r * gap + t.s * (t.r - 1.0)) /
                   (t.own * t.own * r2 * gs2);  // times g_ij^2 per BS
    for (int j = 0; j < inst.num_bs; ++j) h(j) += cross * inst.gain(i, j) * inst.gain(i, j);
    h(m) += self - cross * inst.gain(i, m) * inst.gain(i, m);
  }
  return h;
}

struct NewtonOptions {
  int max_outer_iters = 100;
  double grad_tol = 1e-6;       // on max_j kkt_j * pmax_j (unit-free)
  double armijo_sigma = 0.01;
  double backtrack = 0.5;
  double min_step = 1e-12;
  double min_loaded_psd = 1e-12;  // mW/Hz floor for BSs that serve users
  double hess_floor = 1e-18;      // |H_jj| below this: plain gradient step
  bool record_trace = false;
};

struct NewtonTraceEntry {
  int iteration = 0;
  double utility = 0.0;
  double step = 0.0;     // accepted Armijo step length
  double max_kkt = 0.0;  // largest projected-gradient violation (raw)
};

struct NewtonResult {
  Eigen::VectorXd psd;
  double utility = 0.0;
  std::vector<NewtonTraceEntry> trace;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;  // backtracking hit min_step without acceptance
};

// Projected diagonal-Newton ascent on [floor-or-0, pmax]^L with Armijo
// backtracking measured along the actual (clamped) displacement.  The trace
// of accepted utilities is nondecreasing by construction.
inline NewtonResult newton_power_solve(const NetworkInstance& inst, const Association& assoc,
                                       const Eigen::VectorXd& p0,
                                       const NewtonOptions& opts = {}) {
  const int L = inst.num_bs;
  Eigen::VectorXd lo(L), hi(L);
  for (int j = 0; j < L; ++j) {
    lo(j) = assoc.load[j] > 0 ? opts.min_loaded_psd : 0.0;
    hi(j) = inst.max_psd_mw(j);
  }
  NewtonResult res;
  Eigen::VectorXd p = p0.cwiseMax(lo).cwiseMin(hi);
  double f = power_objective(inst, assoc, p);

  for (int it = 1; it <= opts.max_outer_iters; ++it) {
    Eigen::VectorXd g = power_gradient(inst, assoc, p);
    double max_kkt = 0.0, max_scaled = 0.0;
    for (int j = 0; j < L; ++j) {
      double v;
      if (p(j) >= hi(j) * (1.0 - 1e-12))
        v = std::max(0.0, -g(j));
      else if (p(j) <= lo(j) + 1e-300)
        v = std::max(0.0, g(j));
      else
        v = std::abs(g(j));
      max_kkt = std::max(max_kkt, v);
      max_scaled = std::max(max_scaled, v * hi(j));
    }
    if (max_scaled < opts.grad_tol) {
      res.converged = true;
      if (opts.record_trace) res.trace.push_back({it, f, 0.0, max_kkt});
      break;
    }

    Eigen::VectorXd h = power_hessian_diag(inst, assoc, p);
    Eigen::VectorXd dir(L);
    for (int j = 0; j < L; ++j)
      dir(j) = std::abs(h(j)) > opts.hess_floor ? g(j) / std::abs(h(j)) : g(j);

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= opts.min_step) {
      Eigen::VectorXd trial = (p + alpha * dir).cwiseMax(lo).cwiseMin(hi);
      double slope = g.dot(trial - p);  // >= 0: clamping truncates, never flips
      if (slope <= 0.0) break;          // fully blocked by the box
      double ft = power_objective(inst, assoc, trial);
      if (ft >= f + opts.armijo_sigma * slope) {
        p = trial;
        f = ft;
        accepted = true;
        break;
      }
      alpha *= opts.backtrack;
    }
    res.iterations = it;
    if (!accepted) {
      res.stalled = max_scaled >= opts.grad_tol;
      res.converged = !res.stalled;
      if (opts.record_trace) res.trace.push_back({it, f, 0.0, max_kkt});
      break;
    }
    if (opts.record_trace) res.trace.push_back({it, f, alpha, max_kkt});
  }

  res.psd = std::move(p);
  res.utility = f;
  return res;
}

}  // namespace hetnet
