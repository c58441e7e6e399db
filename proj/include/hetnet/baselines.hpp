#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hetnet/dcd.hpp"
#include "hetnet/netmodel.hpp"
#include "hetnet/types.hpp"

namespace hetnet {

// Every user takes its strongest SINR at the given PSDs; ties (and the
// degenerate all-zero row) resolve to the lowest BS index.
inline Association max_sinr_association(const NetworkInstance& inst, const Eigen::VectorXd& p) {
  std::vector<int> bs_of(inst.num_users, 0);
  for (int i = 0; i < inst.num_users; ++i) {
    double best = -1.0;
    for (int j = 0; j < inst.num_bs; ++j) {
      double s = sinr(inst, i, j, p);
      if (s > best) {
        best = s;
        bs_of[i] = j;
      }
    }
  }
  return Association::from_bs_of(std::move(bs_of), inst.num_bs);
}

// Per-user argmax of (a_ij - price_j), lowest index on ties; the load counts
// feed the subgradient.
inline Association price_greedy_association(const Eigen::MatrixXd& a,
                                            const Eigen::VectorXd& price) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  std::vector<int> bs_of(K, -1);
  for (int i = 0; i < K; ++i) {
    double best = kNegInf;
    for (int j = 0; j < L; ++j) {
      double o = offer(a(i, j), price(j));
      if (o > best) {
        best = o;
        bs_of[i] = j;
      }
    }
    if (bs_of[i] < 0) throw std::invalid_argument("user has no reachable BS");
  }
  return Association::from_bs_of(std::move(bs_of), L);
}

// One projected-free subgradient move on all prices at once, followed by the
// exact load-price refresh: price_j -= alpha * (target_load_j - count_j).
inline std::pair<Eigen::VectorXd, double> subgradient_step(const Eigen::VectorXd& price,
                                                           double load_price,
                                                           const std::vector<int>& counts,
                                                           double alpha, int num_users) {
  Eigen::VectorXd next = price;
  for (int j = 0; j < static_cast<int>(price.size()); ++j)
    next(j) -= alpha * (target_load(price(j), load_price) - counts[j]);
  return {next, optimal_load_price(next, num_users)};
}

struct SubgradientConfig {
  enum class Rule { diminishing, adaptive_level };
  Rule rule = Rule::adaptive_level;
  double alpha0 = 0.5;       // diminishing: alpha_t = alpha0 / sqrt(t)
  double level_gain = 1.0;   // adaptive: step = gain * (g - level) / ||s||^2
  double rho = 1.2;          // level slack growth on reaching the level
  double beta = 0.9;         // level slack decay otherwise
  double delta = 0.002;      // slack floor
  double delta_init = 0.02;
  int max_iters = 500;
  bool record_trace = false;
  TieBreakOptions tie_break;
};

struct SubgradientTraceEntry {
  int iteration = 0;
  double dual_objective = 0.0;
  double best_dual = 0.0;
  double step = 0.0;
};

struct SubgradientResult {
  Association assoc;   // recovered at the best dual point seen
  DualState best;      // best (lowest) dual point
  double utility = 0.0;
  double gap_bound = 0.0;
  std::vector<SubgradientTraceEntry> trace;
  int iterations = 0;
};

// Projection-free dual subgradient with either a diminishing step or the
// adjustable target-level step.  Non-monotone by nature; the best iterate
// is tracked and returned.
inline SubgradientResult subgradient_solve(const Eigen::MatrixXd& a,
                                           const SubgradientConfig& cfg = {}) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  SubgradientResult res;
  Eigen::VectorXd price = Eigen::VectorXd::Zero(L);
  double load_price = optimal_load_price(price, K);
  double best_g = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_price = price;
  double best_load_price = load_price;
  double slack = cfg.delta_init;

  for (int t = 1; t <= cfg.max_iters; ++t) {
    Association greedy = price_greedy_association(a, price);
    double g = dual_objective(a, price, load_price);
    bool reached_level = g <= best_g - slack;
    if (g < best_g) {
      best_g = g;
      best_price = price;
      best_load_price = load_price;
    }

    Eigen::VectorXd s(L);
    for (int j = 0; j < L; ++j)
      s(j) = target_load(price(j), load_price) - greedy.load[j];
    double norm2 = s.squaredNorm();
    // counts and targets are O(K), so below this the direction is rounding
    // noise; dividing the level step by its square would blow the price up
    bool stationary = s.lpNorm<Eigen::Infinity>() <= 1e-12 * static_cast<double>(K);

    double alpha;
    if (cfg.rule == SubgradientConfig::Rule::diminishing) {
      alpha = cfg.alpha0 / std::sqrt(static_cast<double>(t));
    } else {
      if (reached_level)
        slack *= cfg.rho;
      else
        slack = std::max(cfg.beta * slack, cfg.delta);
      double level = best_g - slack;
      alpha = stationary ? 0.0 : cfg.level_gain * (g - level) / norm2;
    }
    if (cfg.record_trace) res.trace.push_back({t, g, best_g, alpha});
    res.iterations = t;
    if (stationary) break;

    std::tie(price, load_price) = subgradient_step(price, load_price, greedy.load, alpha, K);
  }

  res.best.price = best_price;
  res.best.load_price = best_load_price;
  res.best.dual_objective = best_g;
  res.best.iteration = res.iterations;
  res.assoc = recover_association(a, best_price, best_load_price, cfg.tie_break);
  res.utility = detail::assoc_utility(a, res.assoc);
  res.gap_bound = duality_gap_bound(res.assoc, best_price, best_load_price);
  return res;
}

}  // namespace hetnet
