#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hetnet/joint.hpp"
#include "hetnet/netmodel.hpp"

namespace hetnet {

// Per-user transmit vectors, sized by the serving BS's antenna count; only
// users flagged active transmit (and interfere) this slot.
struct BeamformerSet {
  std::vector<Eigen::VectorXcd> v;
  std::vector<char> active;

  static BeamformerSet empty(const NetworkInstance& inst, const Association& assoc) {
    BeamformerSet b;
    b.v.resize(inst.num_users);
    b.active.assign(inst.num_users, 0);
    for (int i = 0; i < inst.num_users; ++i)
      b.v[i] = Eigen::VectorXcd::Zero(inst.bs_antennas[assoc.bs_of[i]]);
    return b;
  }
};

// Received covariance at user i from every active transmission except its
// own, plus noise.
inline Eigen::MatrixXcd interference_covariance(const NetworkInstance& inst,
                                                const Association& assoc,
                                                const BeamformerSet& bf, int i) {
  const int n = inst.user_antennas[i];
  Eigen::MatrixXcd c = inst.noise_psd_mw * Eigen::MatrixXcd::Identity(n, n);
  for (int u = 0; u < inst.num_users; ++u) {
    if (u == i || !bf.active[u]) continue;
    Eigen::VectorXcd x = inst.channel(i, assoc.bs_of[u]) * bf.v[u];
    c.noalias() += x * x.adjoint();
  }
  return c;
}

// Single-stream rate of an active user, bits/s: W log2 det(I + s s^H C^-1)
// which collapses to W log2(1 + s^H C^-1 s) for the rank-one signal.
inline double rate_mimo(const NetworkInstance& inst, const Association& assoc,
                        const BeamformerSet& bf, int i) {
  if (!bf.active[i] || bf.v[i].squaredNorm() == 0.0) return 0.0;
  Eigen::MatrixXcd c = interference_covariance(inst, assoc, bf, i);
  Eigen::VectorXcd s = inst.channel(i, assoc.bs_of[i]) * bf.v[i];
  double q = std::real(s.dot(c.llt().solve(s)));
  return inst.bandwidth_hz * std::log2(1.0 + q);
}

// Stage-1 surrogate: SISO log-rate matrix with the bandwidth scaled by the
// serving BS's antenna count.
inline Eigen::MatrixXd siso_surrogate(const NetworkInstance& inst, const Eigen::VectorXd& p) {
  return utility_matrix(inst, p, true);
}

struct SchedulerState {
  std::vector<double> avg_rate_mbps;  // exponentially averaged served rate
  std::vector<double> weight;         // 1 / avg_rate
  std::vector<int> candidates_per_bs;
  int slot = 0;
};

// Top-S_j users of each cell by weight * nominal rate; ties to the lower
// user index.  Returns per-BS candidate lists (ascending user index).
inline std::vector<std::vector<int>> select_candidates(const Association& assoc,
                                                       const SchedulerState& sched,
                                                       const std::vector<double>& nominal_mbps) {
  const int L = static_cast<int>(assoc.load.size());
  std::vector<std::vector<int>> cand(L);
  std::vector<std::vector<std::pair<double, int>>> scored(L);
  for (int i = 0; i < static_cast<int>(assoc.bs_of.size()); ++i)
    scored[assoc.bs_of[i]].push_back({sched.weight[i] * nominal_mbps[i], i});
  for (int j = 0; j < L; ++j) {
    auto& v = scored[j];
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    int take = std::min<int>(sched.candidates_per_bs[j], static_cast<int>(v.size()));
    for (int t = 0; t < take; ++t) cand[j].push_back(v[t].second);
    std::sort(cand[j].begin(), cand[j].end());
  }
  return cand;
}

struct WmmseOptions {
  int max_iters = 40;
  double tol = 1e-6;  // stop when the cell objective improves less
  bool record_trace = false;
};

struct WmmseCellResult {
  double weighted_sum_rate = 0.0;
  std::vector<double> trace;  // objective after each iteration (nondecreasing)
  int iterations = 0;
};

namespace detail {

// Weighted sum rate of one cell's candidates under the full current set.
inline double cell_objective(const NetworkInstance& inst, const Association& assoc,
                             const BeamformerSet& bf, const std::vector<int>& users,
                             const std::vector<double>& weight) {
  double s = 0.0;
  for (int i : users) s += weight[i] * rate_mimo(inst, assoc, bf, i) / 1e6;
  return s;
}

// Minimum-norm-under-constraint quadratic solve shared by the v-update:
// v_i = (A + lambda I)^-1 b_i with the smallest lambda >= 0 keeping
// sum ||v_i||^2 <= budget.  A is PSD and every b_i lies in its range, so
// lambda = 0 (pseudo-inverse) is well defined when feasible.
inline std::vector<Eigen::VectorXcd> power_capped_solve(const Eigen::MatrixXcd& a_mat,
                                                        const std::vector<Eigen::VectorXcd>& b,
                                                        double budget) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a_mat);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXcd q = es.eigenvectors();
  const int m = static_cast<int>(ev.size());
  const double ev_floor = std::max(ev.maxCoeff(), 1.0) * 1e-14;

  std::vector<Eigen::VectorXcd> bq(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) bq[i] = q.adjoint() * b[i];

  auto power_at = [&](double lambda) {
    double s = 0.0;
    for (const auto& c : bq)
      for (int k = 0; k < m; ++k) {
        double den = ev(k) + lambda;
        if (den <= ev_floor && lambda == 0.0) continue;  // null-space: b has no component
        s += std::norm(c(k)) / (den * den);
      }
    return s;
  };

  double lambda = 0.0;
  if (power_at(0.0) > budget) {
    double bsum = 0.0;
    for (const auto& c : bq) bsum += c.squaredNorm();
    double hi = std::sqrt(bsum / budget);
    double lo = 0.0;
    for (int it = 0; it < 200 && (hi - lo) > 1e-13 * hi; ++it) {
      double mid = 0.5 * (lo + hi);
      (power_at(mid) > budget ? lo : hi) = mid;
    }
    lambda = hi;  // the feasible side of the bracket
  }

  std::vector<Eigen::VectorXcd> v(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    Eigen::VectorXcd scaled(m);
    for (int k = 0; k < m; ++k) {
      double den = ev(k) + lambda;
      scaled(k) = (den <= ev_floor && lambda == 0.0) ? 0.0 : bq[i](k) / den;
    }
    v[i] = q * scaled;
  }
  return v;
}

}  // namespace detail

// Block-coordinate weighted-MMSE descent on one cell's beamformers with all
// other transmissions frozen: MMSE receivers and error weights per candidate,
// then the power-capped joint transmit update.  The cell's weighted sum rate
// is nondecreasing per iteration.
inline WmmseCellResult wmmse_percell(const NetworkInstance& inst, const Association& assoc,
                                     BeamformerSet& bf, int cell_bs,
                                     const std::vector<int>& users,
                                     const std::vector<double>& weight, double budget,
                                     const WmmseOptions& opts = {}) {
  WmmseCellResult res;
  if (users.empty()) return res;
  const int m = inst.bs_antennas[cell_bs];
  double prev = detail::cell_objective(inst, assoc, bf, users, weight);
  if (opts.record_trace) res.trace.push_back(prev);

  for (int it = 1; it <= opts.max_iters; ++it) {
    // MMSE receivers against the total received covariance (own signal in).
    std::vector<Eigen::VectorXcd> u(users.size());
    std::vector<double> w(users.size());
    for (std::size_t t = 0; t < users.size(); ++t) {
      int i = users[t];
      Eigen::MatrixXcd phi = interference_covariance(inst, assoc, bf, i);
      Eigen::VectorXcd s = inst.channel(i, cell_bs) * bf.v[i];
      phi.noalias() += s * s.adjoint();
      u[t] = phi.llt().solve(s);
      double mse = std::max(1.0 - std::real(u[t].dot(s)), 1e-15);  // in (0, 1]
      // Factors common to every user (bandwidth, log base, Mbps) drop out of
      // the transmit update, so only the PF weight over the error survives.
      w[t] = weight[i] / mse;
    }

    Eigen::MatrixXcd a_mat = Eigen::MatrixXcd::Zero(m, m);
    std::vector<Eigen::VectorXcd> b(users.size());
    for (std::size_t t = 0; t < users.size(); ++t) {
      int i = users[t];
      Eigen::VectorXcd hu = inst.channel(i, cell_bs).adjoint() * u[t];
      a_mat.noalias() += w[t] * (hu * hu.adjoint());
      b[t] = w[t] * hu;
    }
    auto v = detail::power_capped_solve(a_mat, b, budget);
    for (std::size_t t = 0; t < users.size(); ++t) bf.v[users[t]] = v[t];

    double obj = detail::cell_objective(inst, assoc, bf, users, weight);
    if (opts.record_trace) res.trace.push_back(obj);
    res.iterations = it;
    if (obj - prev < opts.tol) {
      prev = std::max(prev, obj);
      break;
    }
    prev = obj;
  }
  res.weighted_sum_rate = prev;
  return res;
}

struct TwoStageOptions {
  int candidates_per_bs = 8;
  double ema = 0.1;           // averaging weight of the newest slot rate
  int max_slots = 80;
  int settle_window = 10;     // slots over which settling is measured
  double settle_tol = 1e-3;   // max relative avg-rate drift to stop
  int cell_sweeps = 2;        // coordinate passes over cells per slot
  WmmseOptions wmmse;
  JointOptions stage1;
  DcdOptions stage1_dcd;
  NewtonOptions stage1_newton;
};

struct SlotRecord {
  int slot = 0;
  std::vector<double> rate_mbps;      // served rate this slot (0 if not scheduled)
  std::vector<char> scheduled;
};

struct TwoStageResult {
  Association assoc;      // fixed before the first slot, never changed after
  Eigen::VectorXd psd;    // per-BS slot power budgets, also behind the nominals
  SchedulerState sched;
  BeamformerSet beams;    // last slot's beamformers
  std::vector<double> nominal_mbps;
  std::vector<SlotRecord> slots;
  double utility = 0.0;   // sum of ln(avg_rate_mbps)
  double min_cell_trace_slack = std::numeric_limits<double>::infinity();
  int association_changes = 0;  // stays 0 by construction; recorded anyway
};

namespace detail {

// Matched single-stream start: principal right singular vector.
inline Eigen::VectorXcd matched_direction(const Eigen::MatrixXcd& h) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeThinV);
  return svd.matrixV().col(0);
}

inline TwoStageResult schedule_and_beamform(const NetworkInstance& inst,
                                            const Association& assoc,
                                            const Eigen::VectorXd& psd,
                                            const std::vector<double>& nominal_mbps,
                                            const TwoStageOptions& opts) {
  TwoStageResult res;
  res.assoc = assoc;
  res.psd = psd;
  res.nominal_mbps = nominal_mbps;
  const int K = inst.num_users;
  const int L = inst.num_bs;

  res.sched.candidates_per_bs.assign(L, opts.candidates_per_bs);
  res.sched.avg_rate_mbps = nominal_mbps;
  res.sched.weight.resize(K);
  for (int i = 0; i < K; ++i) res.sched.weight[i] = 1.0 / res.sched.avg_rate_mbps[i];

  BeamformerSet bf = BeamformerSet::empty(inst, assoc);
  std::vector<std::vector<double>> window;

  for (int slot = 1; slot <= opts.max_slots; ++slot) {
    auto cand = select_candidates(assoc, res.sched, nominal_mbps);

    // (Re)initialize: keep last slot's vector when still a candidate, else
    // matched direction; then rescale each cell onto its budget.
    std::vector<char> is_cand(K, 0);
    for (int j = 0; j < L; ++j)
      for (int i : cand[j]) is_cand[i] = 1;
    for (int i = 0; i < K; ++i) {
      int j = assoc.bs_of[i];
      if (!is_cand[i]) {
        bf.v[i].setZero();
        bf.active[i] = 0;
        continue;
      }
      if (!bf.active[i] || bf.v[i].squaredNorm() == 0.0) {
        double share = psd(j) / std::max<std::size_t>(cand[j].size(), 1);
        bf.v[i] = std::sqrt(share) * matched_direction(inst.channel(i, j));
      }
      bf.active[i] = 1;
    }
    for (int j = 0; j < L; ++j) {
      double tot = 0.0;
      for (int i : cand[j]) tot += bf.v[i].squaredNorm();
      if (tot > psd(j)) {
        double scale = std::sqrt(psd(j) / tot);
        for (int i : cand[j]) bf.v[i] *= scale;
      }
    }

    for (int sweep = 0; sweep < opts.cell_sweeps; ++sweep) {
      for (int j = 0; j < L; ++j) {
        if (cand[j].empty()) continue;
        WmmseOptions wo = opts.wmmse;
        wo.record_trace = true;
        auto cell = wmmse_percell(inst, assoc, bf, j, cand[j], res.sched.weight,
                                  psd(j), wo);
        for (std::size_t t = 1; t < cell.trace.size(); ++t)
          res.min_cell_trace_slack =
              std::min(res.min_cell_trace_slack, cell.trace[t] - cell.trace[t - 1]);
      }
    }

    SlotRecord rec;
    rec.slot = slot;
    rec.rate_mbps.assign(K, 0.0);
    rec.scheduled.assign(K, 0);
    for (int i = 0; i < K; ++i) {
      if (!is_cand[i]) continue;
      rec.scheduled[i] = 1;
      rec.rate_mbps[i] = rate_mimo(inst, assoc, bf, i) / 1e6;
    }
    std::vector<double> prev_avg = res.sched.avg_rate_mbps;
    for (int i = 0; i < K; ++i) {
      res.sched.avg_rate_mbps[i] =
          (1.0 - opts.ema) * res.sched.avg_rate_mbps[i] + opts.ema * rec.rate_mbps[i];
      res.sched.weight[i] = 1.0 / res.sched.avg_rate_mbps[i];
    }
    res.sched.slot = slot;
    res.slots.push_back(std::move(rec));

    window.push_back(res.sched.avg_rate_mbps);
    if (static_cast<int>(window.size()) > opts.settle_window + 1)
      window.erase(window.begin());
    if (static_cast<int>(window.size()) == opts.settle_window + 1) {
      double drift = 0.0;
      const auto& old = window.front();
      for (int i = 0; i < K; ++i)
        drift = std::max(drift, std::abs(res.sched.avg_rate_mbps[i] - old[i]) /
                                    std::max(old[i], 1e-12));
      if (drift < opts.settle_tol) break;
    }
  }

  res.beams = std::move(bf);
  res.utility = 0.0;
  for (int i = 0; i < K; ++i) res.utility += std::log(res.sched.avg_rate_mbps[i]);
  return res;
}

// Antenna-scaled shared-spectrum rates in Mbps under a fixed association.
inline std::vector<double> nominal_rates_mbps(const NetworkInstance& inst,
                                              const Association& assoc,
                                              const Eigen::VectorXd& p) {
  Eigen::MatrixXd a = siso_surrogate(inst, p);
  std::vector<double> r(inst.num_users);
  for (int i = 0; i < inst.num_users; ++i) {
    int j = assoc.bs_of[i];
    r[i] = std::exp(a(i, j)) / assoc.load[j];
  }
  return r;
}

}  // namespace detail

// Stage 1: joint association and power on the antenna-scaled surrogate,
// freezing the association.  Stage 2: per-slot candidate selection by
// PF weight times nominal rate, per-cell WMMSE beamforming within the
// stage-1 power allocation, average-rate bookkeeping.  Keeping the quiet
// stations quiet is what preserves the interference pattern the
// association was chosen for; the association never changes across slots.
inline TwoStageResult two_stage_solve(const NetworkInstance& inst, TwoStageOptions opts = {}) {
  opts.stage1.antenna_scaled = true;
  JointResult s1 = iterate_association_power(inst, inst.max_psd_mw, opts.stage1,
                                             opts.stage1_dcd, opts.stage1_newton);
  auto nominal = detail::nominal_rates_mbps(inst, s1.assoc, s1.psd);
  return detail::schedule_and_beamform(inst, s1.assoc, s1.psd, nominal, opts);
}

// Comparison arm: strongest-SINR association at full power, same stage 2.
inline TwoStageResult maxsinr_wmmse_solve(const NetworkInstance& inst,
                                          const TwoStageOptions& opts = {}) {
  Association assoc = max_sinr_association(inst, inst.max_psd_mw);
  auto nominal = detail::nominal_rates_mbps(inst, assoc, inst.max_psd_mw);
  return detail::schedule_and_beamform(inst, assoc, inst.max_psd_mw, nominal, opts);
}

}  // namespace hetnet
