#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "hetnet/common.hpp"
#include "hetnet/types.hpp"

namespace hetnet {

// Price a BS asks once it is effectively unreachable (no finite offer).  The
// exp of (cap - load_price - 1) is 1e-18, small enough that parking a price
// here never moves the dual objective above the 1e-12 monotonicity budget.
constexpr double kDeadPriceLogLoad = -41.45;  // ln(1e-18)

// Offer of BS j to a user: log-rate minus price.  -inf log-rates stay -inf
// regardless of price so dead transmitters never produce NaN or win.
inline double offer(double a, double price) { return a == kNegInf ? kNegInf : a - price; }

// Load a BS is priced to carry: e^(price_j - load_price - 1).
inline double target_load(double price_j, double load_price) {
  return std::exp(price_j - load_price - 1.0);
}

// Lagrangian dual of the load-coupled association problem:
//   sum_i max_j(a_ij - price_j) + sum_j e^(price_j - load_price - 1)
//   + load_price * K.
inline double dual_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& price,
                             double load_price) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  double g = 0.0;
  for (int i = 0; i < K; ++i) {
    double best = kNegInf;
    for (int j = 0; j < L; ++j) best = std::max(best, offer(a(i, j), price(j)));
    g += best;
  }
  for (int j = 0; j < L; ++j) g += target_load(price(j), load_price);
  return g + load_price * K;
}

// Exact minimizer of the dual in the scalar price: the log-sum-exp form of
// ln(sum_j e^(price_j - 1) / K).  Afterwards the target loads sum to K.
inline double optimal_load_price(const Eigen::VectorXd& price, int num_users) {
  double m = price.maxCoeff();
  double s = 0.0;
  for (int j = 0; j < static_cast<int>(price.size()); ++j) s += std::exp(price(j) - m);
  return m - 1.0 + std::log(s) - std::log(static_cast<double>(num_users));
}

// Exact coordinate minimizer of the dual in price_j, holding the rest fixed:
// the largest price at which the priced-in load does not exceed the count of
// users still preferring BS j (ties included).  Piecewise structure: user i
// prefers j iff price_j <= beta_i where beta_i = a_ij - best other offer, so
// the preferring-user count is a step function with breakpoints beta and the
// exp term crosses it exactly once.
inline double optimal_price_for_bs(const Eigen::MatrixXd& a, const Eigen::VectorXd& price,
                                   double load_price, int j) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  std::vector<double> beta;
  beta.reserve(K);
  for (int i = 0; i < K; ++i) {
    if (a(i, j) == kNegInf) continue;  // i can never prefer a dead BS
    double rest = kNegInf;
    for (int l = 0; l < L; ++l)
      if (l != j) rest = std::max(rest, offer(a(i, l), price(l)));
    beta.push_back(rest == kNegInf ? std::numeric_limits<double>::infinity() : a(i, j) - rest);
  }
  if (beta.empty()) return std::min(price(j), load_price + 1.0 + kDeadPriceLogLoad);

  std::sort(beta.begin(), beta.end(), std::greater<>());
  const int n = static_cast<int>(beta.size());
  for (int m = 1; m <= n; ++m) {
    double hi = beta[m - 1];
    double lo = m < n ? beta[m] : kNegInf;
    double cross = load_price + 1.0 + std::log(static_cast<double>(m));
    if (cross >= hi) return hi;   // whole segment feasible; supremum at its top
    if (cross > lo) return cross; // crossing interior to the segment
  }
  return beta.back();  // unreachable: the last segment always returns
}

// Load-penalty slack of an association against priced-in target loads:
//   sum_j [ k_j ln k_j - k_j (price_j - load_price - 1) ].
// Upper-bounds the distance of the recovered primal from the optimum when
// the dual point is price-optimal per user.
inline double duality_gap_bound(const Association& assoc, const Eigen::VectorXd& price,
                                double load_price) {
  double b = 0.0;
  for (int j = 0; j < static_cast<int>(assoc.load.size()); ++j) {
    double k = assoc.load[j];
    b += xlogx(k) - k * (price(j) - load_price - 1.0);
  }
  return b;
}

struct TieBreakOptions {
  int tie_break_exhaustive_limit = 12;  // max tied users enumerated exhaustively
  double max_enumerations = 1e6;        // safety cap on the alternative product
};

// Primal recovery at a dual point: every user takes a maximal offer; users
// with a non-unique maximum are resolved toward the smallest gap bound,
// exhaustively when cheap enough, greedily (in user order, lowest BS index
// on ties) otherwise.
inline Association recover_association(const Eigen::MatrixXd& a, const Eigen::VectorXd& price,
                                       double load_price, const TieBreakOptions& opts = {}) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  std::vector<int> bs_of(K, -1);
  std::vector<int> load(L, 0);
  std::vector<int> tied_users;
  std::vector<std::vector<int>> tied_options;
  double enumerations = 1.0;

  for (int i = 0; i < K; ++i) {
    double best = kNegInf;
    for (int j = 0; j < L; ++j) best = std::max(best, offer(a(i, j), price(j)));
    if (best == kNegInf) throw std::invalid_argument("user has no reachable BS");
    std::vector<int> arg;
    for (int j = 0; j < L; ++j)
      if (offer(a(i, j), price(j)) == best) arg.push_back(j);
    if (arg.size() == 1) {
      bs_of[i] = arg[0];
      load[arg[0]]++;
    } else {
      tied_users.push_back(i);
      enumerations *= static_cast<double>(arg.size());
      tied_options.push_back(std::move(arg));
    }
  }

  auto gap_of = [&](const std::vector<int>& k) {
    double b = 0.0;
    for (int j = 0; j < L; ++j)
      b += xlogx(static_cast<double>(k[j])) -
           static_cast<double>(k[j]) * (price(j) - load_price - 1.0);
    return b;
  };

  const int T = static_cast<int>(tied_users.size());
  if (T > 0 && T <= opts.tie_break_exhaustive_limit && enumerations <= opts.max_enumerations) {
    double best_gap = std::numeric_limits<double>::infinity();
    std::vector<int> best_choice(T, 0);
    std::vector<int> cur(T, 0);
    // Depth-first product over tied alternatives; options are in ascending
    // BS order and only strict improvements replace, so equal-gap ties land
    // on the lowest indices.
    std::function<void(int)> rec = [&](int u) {
      if (u == T) {
        double b = gap_of(load);
        if (b < best_gap) {
          best_gap = b;
          best_choice = cur;
        }
        return;
      }
      for (int c = 0; c < static_cast<int>(tied_options[u].size()); ++c) {
        cur[u] = c;
        load[tied_options[u][c]]++;
        rec(u + 1);
        load[tied_options[u][c]]--;
      }
    };
    rec(0);
    for (int u = 0; u < T; ++u) {
      int j = tied_options[u][best_choice[u]];
      bs_of[tied_users[u]] = j;
      load[j]++;
    }
  } else {
    for (int u = 0; u < T; ++u) {
      int pick = -1;
      double best_delta = std::numeric_limits<double>::infinity();
      for (int j : tied_options[u]) {
        double k = load[j];
        double delta = (k + 1.0) * std::log(k + 1.0) - xlogx(k) - (price(j) - load_price - 1.0);
        if (delta < best_delta) {
          best_delta = delta;
          pick = j;
        }
      }
      bs_of[tied_users[u]] = pick;
      load[pick]++;
    }
  }
  Association assoc;
  assoc.bs_of = std::move(bs_of);
  assoc.load = std::move(load);
  return assoc;
}

struct DcdOptions {
  double tol = 1e-6;    // sweep-to-sweep dual decrease below this stops
  int max_sweeps = 200;
  bool randomized_order = false;  // permute the BS visit order each sweep
  std::uint64_t order_seed = 0;
  TieBreakOptions tie_break;
  bool record_trace = false;   // one entry per coordinate update
  bool record_primal = false;  // also recover a primal at every update (slow)
};

struct DcdTraceEntry {
  int iteration = 0;    // 1-based count of price updates
  int updated_bs = -1;  // -1 marks a load-price refresh
  double dual_objective = 0.0;
  double primal_utility = std::numeric_limits<double>::quiet_NaN();
};

struct DcdResult {
  Association assoc;
  DualState dual;
  double utility = 0.0;    // association_utility of the recovered primal
  double gap_bound = 0.0;  // certified distance to the optimum
  std::vector<DcdTraceEntry> trace;
  std::vector<double> sweep_dual;  // dual objective after each full sweep
  int sweeps = 0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {
inline double assoc_utility(const Eigen::MatrixXd& a, const Association& assoc) {
  double u = 0.0;
  for (int i = 0; i < static_cast<int>(assoc.bs_of.size()); ++i) u += a(i, assoc.bs_of[i]);
  for (int k : assoc.load) u -= xlogx(static_cast<double>(k));
  return u;
}
}  // namespace detail

// Coordinate descent on the dual: exact per-BS price minimization swept over
// all BSs, load price refreshed after each sweep, until the (monotone) dual
// objective stalls.  Primal recovered from the final prices.
inline DcdResult dcd_solve(const Eigen::MatrixXd& a, const DcdOptions& opts = {}) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  if (K < 1 || L < 1) throw std::invalid_argument("dcd_solve: empty problem");

  DcdResult res;
  Eigen::VectorXd price = Eigen::VectorXd::Zero(L);
  double load_price = optimal_load_price(price, K);
  double g = dual_objective(a, price, load_price);
  std::mt19937_64 order_rng(opts.order_seed);
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);

  auto log_entry = [&](int bs) {
    if (!opts.record_trace) return;
    DcdTraceEntry e;
    e.iteration = res.iterations;
    e.updated_bs = bs;
    e.dual_objective = g;
    if (opts.record_primal) {
      Association rec = recover_association(a, price, load_price, opts.tie_break);
      e.primal_utility = detail::assoc_utility(a, rec);
    }
    res.trace.push_back(e);
  };

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double g_before = g;
    if (opts.randomized_order) std::shuffle(order.begin(), order.end(), order_rng);
    for (int j : order) {
      price(j) = optimal_price_for_bs(a, price, load_price, j);
      res.iterations++;
      g = dual_objective(a, price, load_price);
      log_entry(j);
    }
    load_price = optimal_load_price(price, K);
    g = dual_objective(a, price, load_price);
    log_entry(-1);
    res.sweep_dual.push_back(g);
    res.sweeps = sweep;
    if (g_before - g < opts.tol) {
      res.converged = true;
      break;
    }
  }

  res.assoc = recover_association(a, price, load_price, opts.tie_break);
  res.utility = detail::assoc_utility(a, res.assoc);
  res.gap_bound = duality_gap_bound(res.assoc, price, load_price);
  res.dual.price = std::move(price);
  res.dual.load_price = load_price;
  res.dual.dual_objective = g;
  res.dual.iteration = res.iterations;
  return res;
}

}  // namespace hetnet
