#pragma once

#include <Eigen/Dense>
#include <vector>

namespace hetnet {

// Per-user serving BS plus the induced per-BS load.  load[j] is redundant
// with bs_of but kept consistent by construction everywhere.
struct Association {
  std::vector<int> bs_of;  // size K, values in [0, L)
  std::vector<int> load;   // size L, load[j] = |{i : bs_of[i] == j}|

  static Association from_bs_of(std::vector<int> bs_of, int num_bs) {
    Association a;
    a.bs_of = std::move(bs_of);
    a.load.assign(num_bs, 0);
    for (int j : a.bs_of) a.load[j]++;
    return a;
  }
};

inline bool operator==(const Association& a, const Association& b) {
  return a.bs_of == b.bs_of;
}

// Dual point of the load-balancing problem: one price per BS plus the
// scalar price tied to the total-user-count constraint.
struct DualState {
  Eigen::VectorXd price;      // size L
  double load_price = 0.0;
  double dual_objective = 0.0;
  int iteration = 0;
};

}  // namespace hetnet
