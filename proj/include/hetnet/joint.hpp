#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hetnet/baselines.hpp"
#include "hetnet/common.hpp"
#include "hetnet/dcd.hpp"
#include "hetnet/netmodel.hpp"
#include "hetnet/powerctl.hpp"

namespace hetnet {

struct JointOptions {
  int max_rounds = 20;
  double utility_tol = 1e-6;
  bool antenna_scaled = false;  // use the spatial-multiplexing surrogate rates
  bool record_trace = true;
};

struct JointTraceEntry {
  int round = 0;
  double utility = 0.0;
  double macro_user_fraction = 0.0;
  double mean_macro_psd = 0.0;  // mW/Hz
  double mean_pico_psd = 0.0;
};

struct JointResult {
  Association assoc;
  Eigen::VectorXd psd;
  double utility = 0.0;
  std::vector<JointTraceEntry> trace;
  int rounds = 0;
  bool converged = false;
};

namespace detail {

inline JointTraceEntry joint_trace_entry(const NetworkInstance& inst, const Association& assoc,
                                         const Eigen::VectorXd& p, int round, double utility) {
  JointTraceEntry e;
  e.round = round;
  e.utility = utility;
  int on_macro = 0, n_macro = 0, n_pico = 0;
  double sum_macro = 0.0, sum_pico = 0.0;
  for (int j = 0; j < inst.num_bs; ++j) {
    if (inst.tier[j] == BsTier::macro) {
      n_macro++;
      sum_macro += p(j);
    } else {
      n_pico++;
      sum_pico += p(j);
    }
  }
  for (int i = 0; i < inst.num_users; ++i)
    if (inst.tier[assoc.bs_of[i]] == BsTier::macro) on_macro++;
  e.macro_user_fraction = static_cast<double>(on_macro) / inst.num_users;
  e.mean_macro_psd = n_macro ? sum_macro / n_macro : 0.0;
  e.mean_pico_psd = n_pico ? sum_pico / n_pico : 0.0;
  return e;
}

}  // namespace detail

// Alternate price-based re-association at fixed power with Newton power
// ascent at fixed association.  A candidate association is adopted only if
// it does not lower the utility at the current power, so the round trace is
// nondecreasing.
inline JointResult iterate_association_power(const NetworkInstance& inst,
                                             const Eigen::VectorXd& p0,
                                             const JointOptions& jopts = {},
                                             const DcdOptions& dcd_opts = {},
                                             const NewtonOptions& newton_opts = {}) {
  JointResult res;
  Eigen::VectorXd p = p0;
  Association cur;
  double u_prev = -std::numeric_limits<double>::infinity();
  for (int round = 1; round <= jopts.max_rounds; ++round) {
    Eigen::MatrixXd a = utility_matrix(inst, p, jopts.antenna_scaled);
    Association cand = dcd_solve(a, dcd_opts).assoc;
    if (round == 1 || network_utility(inst, cand, p) >= network_utility(inst, cur, p))
      cur = std::move(cand);
    NewtonResult nt = newton_power_solve(inst, cur, p, newton_opts);
    p = nt.psd;
    double u = network_utility(inst, cur, p);
    if (jopts.record_trace)
      res.trace.push_back(detail::joint_trace_entry(inst, cur, p, round, u));
    res.rounds = round;
    if (u - u_prev < jopts.utility_tol) {
      res.converged = true;
      u_prev = u;
      break;
    }
    u_prev = u;
  }
  res.assoc = std::move(cur);
  res.psd = std::move(p);
  res.utility = u_prev;
  return res;
}

// Same loop with strongest-SINR re-association adopted unconditionally.
// Not monotone; kept as the comparison arm.
inline JointResult iterate_maxsinr_power(const NetworkInstance& inst, const Eigen::VectorXd& p0,
                                         const JointOptions& jopts = {},
                                         const NewtonOptions& newton_opts = {}) {
  JointResult res;
  Eigen::VectorXd p = p0;
  Association cur;
  double u_prev = std::numeric_limits<double>::quiet_NaN();
  for (int round = 1; round <= jopts.max_rounds; ++round) {
    cur = max_sinr_association(inst, p);
    NewtonResult nt = newton_power_solve(inst, cur, p, newton_opts);
    p = nt.psd;
    double u = network_utility(inst, cur, p);
    if (jopts.record_trace)
      res.trace.push_back(detail::joint_trace_entry(inst, cur, p, round, u));
    res.rounds = round;
    if (round > 1 && std::abs(u - u_prev) < jopts.utility_tol) {
      res.converged = true;
      u_prev = u;
      break;
    }
    u_prev = u;
  }
  res.assoc = std::move(cur);
  res.psd = std::move(p);
  res.utility = u_prev;
  return res;
}

struct DirectDualOptions {
  int num_starts = 10;        // random inner starts per dual evaluation
  int inner_alternations = 3; // association/power alternations per start
  double bisection_tol = 1e-2;   // price bracket width at which bisection stops
  double bracket_half_width = 4.0;
  int bracket_expansions = 5;
  int max_outer_sweeps = 3;
  double sweep_tol = 1e-3;
  std::uint64_t seed = 777;
  int power_call_budget = 1500;  // per price update; exceeding flags a warning
  bool record_trace = false;
  NewtonOptions inner_newton{.max_outer_iters = 30, .grad_tol = 1e-4};
  NewtonOptions polish_newton{.max_outer_iters = 100, .grad_tol = 1e-7};
};

struct DirectDualResult {
  Association assoc;      // best primal met anywhere in the search, polished
  Eigen::VectorXd psd;
  double utility = 0.0;
  DualState dual;         // final dual point; certified >= utility
  std::vector<std::pair<int, double>> trace;  // (price update #, dual value)
  int power_solver_calls = 0;
  bool cost_warning = false;
  std::string warning;
};

// Bisection on each price using the subderivative sign (priced-in load minus
// the load the inner maximization actually attracts), the inner maximization
// being alternating best-response association and Newton power ascent from
// multiple starts.  Every power vector met anywhere is replayed in the final
// dual evaluation, which makes the returned dual value an upper bound on the
// returned (and any intermediate) primal utility.
inline DirectDualResult direct_dual_solve(const NetworkInstance& inst,
                                          const DirectDualOptions& opts = {}) {
  const int K = inst.num_users;
  const int L = inst.num_bs;
  DirectDualResult res;
  Rng rng(opts.seed);

  Eigen::VectorXd price = Eigen::VectorXd::Zero(L);
  double load_price = optimal_load_price(price, K);

  std::vector<Eigen::VectorXd> pool;  // every PSD vector encountered
  double best_utility = -std::numeric_limits<double>::infinity();
  Association best_assoc;
  Eigen::VectorXd best_psd;

  auto phi = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& pr) {
    Eigen::MatrixXd a = utility_matrix(inst, p);
    double s = 0.0;
    for (int i = 0; i < K; ++i) {
      double best = kNegInf;
      for (int j = 0; j < L; ++j) best = std::max(best, offer(a(i, j), pr(j)));
      s += best;
    }
    return s;
  };

  // Inner maximization of sum_i max_j(a_ij(p) - price_j) over (X, p).
  // Returns the best phi and the attracted per-BS counts at that point.
  auto inner_max = [&](const Eigen::VectorXd& pr, double lp, bool full_starts) {
    struct Inner {
      double phi = kNegInf;
      std::vector<int> counts;
    } out;
    int starts = full_starts ? std::max(2, opts.num_starts) : std::max(1, opts.num_starts);
    for (int s = 0; s < starts; ++s) {
      Eigen::VectorXd p(L);
      if (s == 0) {
        p = inst.max_psd_mw;
      } else if (s == 1 && best_psd.size() == L) {
        p = best_psd;
      } else {
        for (int j = 0; j < L; ++j)
          p(j) = inst.max_psd_mw(j) * std::pow(10.0, -3.0 * rng.uniform());
      }
      Association x;
      for (int alt = 0; alt < opts.inner_alternations; ++alt) {
        Eigen::MatrixXd a = utility_matrix(inst, p);
        x = price_greedy_association(a, pr);
        NewtonResult nt = newton_power_solve(inst, x, p, opts.inner_newton);
        res.power_solver_calls++;
        p = nt.psd;
        pool.push_back(p);
        double u = network_utility(inst, x, p);
        if (u > best_utility) {
          best_utility = u;
          best_assoc = x;
          best_psd = p;
        }
      }
      double f = phi(p, pr);
      if (f > out.phi) {
        Eigen::MatrixXd a = utility_matrix(inst, p);
        Association xf = price_greedy_association(a, pr);
        out.phi = f;
        out.counts = xf.load;
      }
    }
    (void)lp;
    return out;
  };

  auto dual_value = [&](const Eigen::VectorXd& pr, double lp, double phi_val) {
    double g = phi_val + lp * K;
    for (int j = 0; j < L; ++j) g += target_load(pr(j), lp);
    return g;
  };

  int updates = 0;
  double prev_sweep_g = std::numeric_limits<double>::infinity();
  for (int sweep = 1; sweep <= opts.max_outer_sweeps; ++sweep) {
    for (int j = 0; j < L; ++j) {
      int calls_before = res.power_solver_calls;
      auto subderiv = [&](double mj) {
        Eigen::VectorXd pr = price;
        pr(j) = mj;
        auto in = inner_max(pr, load_price, false);
        return target_load(mj, load_price) - in.counts[j];
      };
      double cur = price(j);
      double d0 = subderiv(cur);
      double lo = cur, hi = cur;
      if (d0 <= 0.0) {
        double w = opts.bracket_half_width;
        for (int e = 0; e < opts.bracket_expansions; ++e, w *= 2.0) {
          hi = cur + w;
          if (subderiv(hi) > 0.0) break;
          lo = hi;
        }
      } else {
        double w = opts.bracket_half_width;
        for (int e = 0; e < opts.bracket_expansions; ++e, w *= 2.0) {
          lo = cur - w;
          if (subderiv(lo) <= 0.0) break;
          hi = lo;
        }
      }
      while (hi - lo > opts.bisection_tol) {
        double mid = 0.5 * (lo + hi);
        if (subderiv(mid) <= 0.0)
          lo = mid;
        else
          hi = mid;
      }
      price(j) = lo;  // last point with nonpositive subderivative
      load_price = optimal_load_price(price, K);
      updates++;
      int calls = res.power_solver_calls - calls_before;
      if (calls > opts.power_call_budget && !res.cost_warning) {
        res.cost_warning = true;
        res.warning = "price update cost " + std::to_string(calls) +
                      " power solves, budget " + std::to_string(opts.power_call_budget);
      }
      if (opts.record_trace) {
        auto in = inner_max(price, load_price, false);
        res.trace.emplace_back(updates, dual_value(price, load_price, in.phi));
      }
    }
    auto in = inner_max(price, load_price, true);
    double g = dual_value(price, load_price, in.phi);
    if (prev_sweep_g - g < opts.sweep_tol && sweep > 1) break;
    prev_sweep_g = g;
  }

  // Final certified dual value: phi maximized over fresh starts, the
  // incumbent, and a replay of every PSD vector met during the search.
  auto in = inner_max(price, load_price, true);
  double phi_final = in.phi;
  for (const auto& p : pool) phi_final = std::max(phi_final, phi(p, price));
  res.dual.price = price;
  res.dual.load_price = load_price;
  res.dual.dual_objective = dual_value(price, load_price, phi_final);
  res.dual.iteration = updates;

  NewtonResult polish = newton_power_solve(inst, best_assoc, best_psd, opts.polish_newton);
  res.power_solver_calls++;
  if (polish.utility > best_utility) {
    best_utility = polish.utility;
    best_psd = polish.psd;
  }
  // The polished PSD is part of the search history too; keep the bound honest.
  res.dual.dual_objective =
      std::max(res.dual.dual_objective, dual_value(price, load_price, phi(best_psd, price)));
  res.assoc = std::move(best_assoc);
  res.psd = std::move(best_psd);
  res.utility = best_utility;
  return res;
}

}  // namespace hetnet
