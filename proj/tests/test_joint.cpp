#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "hetnet/harness.hpp"
#include "hetnet/joint.hpp"
#include "test_util.hpp"

using namespace hetnet;
using Catch::Approx;

TEST_CASE("with power ascent disabled the loop reduces to one association pass") {
  Rng rng(501);
  NetworkInstance inst = testutil::random_instance(rng, 12, 3);
  NewtonOptions frozen;
  frozen.max_outer_iters = 0;  // power stays at the start
  JointOptions jopts;
  jopts.max_rounds = 1;
  JointResult res = iterate_association_power(inst, inst.max_psd_mw, jopts, {}, frozen);

  DcdResult dcd = dcd_solve(utility_matrix(inst, inst.max_psd_mw));
  CHECK(res.assoc.bs_of == dcd.assoc.bs_of);
  CHECK(res.psd == inst.max_psd_mw);
  CHECK(res.utility == Approx(network_utility(inst, dcd.assoc, inst.max_psd_mw)).epsilon(1e-12));
}

TEST_CASE("price-based rounds never lose utility") {
  Rng rng(523);
  for (int rep = 0; rep < 3; ++rep) {
    NetworkInstance inst = testutil::random_instance(rng, 20, 5);
    JointResult res = iterate_association_power(inst, inst.max_psd_mw);
    REQUIRE(!res.trace.empty());
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& e : res.trace) {
      CHECK(e.utility >= prev - 1e-9);
      CHECK(e.macro_user_fraction >= 0.0);
      CHECK(e.macro_user_fraction <= 1.0);
      prev = e.utility;
    }
    CHECK(res.converged);
    CHECK(res.utility == Approx(res.trace.back().utility).epsilon(1e-12));
    // never worse than not iterating at all
    Association first = dcd_solve(utility_matrix(inst, inst.max_psd_mw)).assoc;
    CHECK(res.utility >= network_utility(inst, first, inst.max_psd_mw) - 1e-9);
  }
}

TEST_CASE("strongest-SINR arm runs to a finite fixed point") {
  Rng rng(541);
  NetworkInstance inst = testutil::random_instance(rng, 15, 4);
  JointResult res = iterate_maxsinr_power(inst, inst.max_psd_mw);
  CHECK(std::isfinite(res.utility));
  CHECK(res.rounds >= 1);
  REQUIRE(!res.trace.empty());
  int total = 0;
  for (int k : res.assoc.load) total += k;
  CHECK(total == 15);
  CHECK(res.utility == Approx(network_utility(inst, res.assoc, res.psd)).epsilon(1e-12));
}

TEST_CASE("direct dual search matches a brute-force grid on a tiny network") {
  Rng rng(557);
  NetworkInstance inst = testutil::random_instance(rng, 4, 2);
  JointOracleResult oracle = joint_brute_oracle(inst, 12);

  DirectDualOptions opts;
  opts.num_starts = 4;
  opts.inner_alternations = 2;
  opts.max_outer_sweeps = 2;
  opts.bisection_tol = 0.05;
  opts.bracket_expansions = 4;
  DirectDualResult dd = direct_dual_solve(inst, opts);

  CHECK(dd.utility >= oracle.utility - 1e-3);
  CHECK(dd.utility <= oracle.utility + 1e-2);  // oracle is polished; near-global here
  CHECK(dd.dual.dual_objective >= dd.utility - 1e-9);
  CHECK(dd.utility == Approx(network_utility(inst, dd.assoc, dd.psd)).epsilon(1e-12));
}

TEST_CASE("direct dual certificate and bookkeeping hold on a medium network") {
  Rng rng(569);
  NetworkInstance inst = testutil::random_instance(rng, 20, 4);
  DirectDualOptions opts;
  opts.num_starts = 3;
  opts.inner_alternations = 2;
  opts.max_outer_sweeps = 2;
  opts.bisection_tol = 0.1;
  opts.record_trace = true;
  DirectDualResult dd = direct_dual_solve(inst, opts);

  CHECK(dd.dual.dual_objective >= dd.utility - 1e-9);
  CHECK(dd.power_solver_calls > 0);
  CHECK(!dd.trace.empty());
  for (const auto& [update, g] : dd.trace) CHECK(std::isfinite(g));
  int total = 0;
  for (int k : dd.assoc.load) total += k;
  CHECK(total == 20);
  for (int j = 0; j < 4; ++j) {
    CHECK(dd.psd(j) >= 0.0);
    CHECK(dd.psd(j) <= inst.max_psd_mw(j) * (1.0 + 1e-12));
  }
}

TEST_CASE("a lone station takes everyone at full power under both searches") {
  Rng rng(587);
  NetworkInstance inst = testutil::random_instance(rng, 5, 1);
  JointResult joint = iterate_association_power(inst, inst.max_psd_mw);
  CHECK(joint.assoc.load[0] == 5);
  CHECK(joint.psd(0) == Approx(inst.max_psd_mw(0)).epsilon(1e-9));

  DirectDualOptions opts;
  opts.num_starts = 2;
  opts.inner_alternations = 1;
  opts.max_outer_sweeps = 1;
  DirectDualResult dd = direct_dual_solve(inst, opts);
  CHECK(dd.assoc.load[0] == 5);
  CHECK(dd.utility == Approx(joint.utility).margin(1e-6));
  CHECK(dd.dual.dual_objective >= dd.utility - 1e-9);
}

TEST_CASE("exceeding the per-update power budget raises the cost flag") {
  Rng rng(593);
  NetworkInstance inst = testutil::random_instance(rng, 6, 2);
  DirectDualOptions opts;
  opts.num_starts = 3;
  opts.inner_alternations = 2;
  opts.max_outer_sweeps = 1;
  opts.power_call_budget = 1;
  DirectDualResult dd = direct_dual_solve(inst, opts);
  CHECK(dd.cost_warning);
  CHECK(!dd.warning.empty());
}
