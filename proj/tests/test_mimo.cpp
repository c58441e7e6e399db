#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "hetnet/mimo.hpp"
#include "test_util.hpp"

using namespace hetnet;
using Catch::Approx;

namespace {

// One-cell MIMO topology small enough for tests.
NetworkInstance small_mimo(int users, int bs_antennas, int user_antennas, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.num_cells = 1;
  cfg.picos_per_cell = 1;
  cfg.users_per_cell = users;
  cfg.bs_antennas = bs_antennas;
  cfg.user_antennas = user_antennas;
  cfg.wraparound = false;
  cfg.seed = seed;
  return gen_topology(cfg);
}

BeamformerSet matched_start(const NetworkInstance& inst, const Association& assoc) {
  BeamformerSet bf = BeamformerSet::empty(inst, assoc);
  for (int i = 0; i < inst.num_users; ++i) {
    int j = assoc.bs_of[i];
    double share = inst.max_psd_mw(j) / std::max(assoc.load[j], 1);
    bf.v[i] = std::sqrt(share) * detail::matched_direction(inst.channel(i, j));
    bf.active[i] = 1;
  }
  return bf;
}

}  // namespace

TEST_CASE("single-stream rate agrees with the log-det quotient") {
  NetworkInstance inst = small_mimo(5, 4, 2, 9);
  REQUIRE(inst.has_mimo());
  Association assoc = max_sinr_association(inst, inst.max_psd_mw);
  BeamformerSet bf = matched_start(inst, assoc);
  for (int i = 0; i < inst.num_users; ++i) {
    Eigen::MatrixXcd c = interference_covariance(inst, assoc, bf, i);
    Eigen::VectorXcd s = inst.channel(i, assoc.bs_of[i]) * bf.v[i];
    Eigen::MatrixXcd cs = c + s * s.adjoint();
    double oracle =
        inst.bandwidth_hz * std::log2(std::real(cs.determinant()) / std::real(c.determinant()));
    double direct = rate_mimo(inst, assoc, bf, i);
    CHECK(direct == Approx(oracle).epsilon(1e-9));
  }
  // inactive or silent users carry no rate
  bf.active[0] = 0;
  CHECK(rate_mimo(inst, assoc, bf, 0) == 0.0);
  bf.active[0] = 1;
  bf.v[0].setZero();
  CHECK(rate_mimo(inst, assoc, bf, 0) == 0.0);
}

TEST_CASE("uniform weight scaling leaves the beamformers unchanged") {
  NetworkInstance inst = small_mimo(6, 4, 2, 17);
  Association assoc = max_sinr_association(inst, inst.max_psd_mw);
  std::vector<int> users;
  for (int i = 0; i < inst.num_users; ++i)
    if (assoc.bs_of[i] == 0) users.push_back(i);
  REQUIRE(users.size() >= 2);

  std::vector<double> w1(inst.num_users, 0.0), w5(inst.num_users, 0.0);
  Rng rng(3);
  for (int i : users) {
    w1[i] = 0.5 + rng.uniform();
    w5[i] = 5.0 * w1[i];
  }
  WmmseOptions wo;
  wo.max_iters = 15;
  wo.tol = 0.0;
  BeamformerSet a = matched_start(inst, assoc);
  BeamformerSet b = matched_start(inst, assoc);
  WmmseCellResult ra = wmmse_percell(inst, assoc, a, 0, users, w1, inst.max_psd_mw(0), wo);
  WmmseCellResult rb = wmmse_percell(inst, assoc, b, 0, users, w5, inst.max_psd_mw(0), wo);
  for (int i : users) {
    double diff = (a.v[i] - b.v[i]).norm();
    CHECK(diff <= 1e-6 * std::max(a.v[i].norm(), 1e-12));
  }
  CHECK(rb.weighted_sum_rate == Approx(5.0 * ra.weighted_sum_rate).epsilon(1e-9));
}

TEST_CASE("lone MISO user converges to matched filtering at full power") {
  Eigen::MatrixXd gain(1, 1);
  gain << 1.0;
  Eigen::VectorXd pmax(1);
  pmax << 2.0;
  NetworkInstance inst = testutil::make_instance(gain, pmax, 0.5);
  inst.bs_antennas = {4};
  inst.user_antennas = {1};
  Eigen::MatrixXcd h(1, 4);
  h << std::complex<double>(1.0, 0.5), std::complex<double>(-0.3, 0.2),
      std::complex<double>(0.7, -0.1), std::complex<double>(0.2, 0.9);
  inst.mimo_channels = {h};

  Association assoc = Association::from_bs_of({0}, 1);
  BeamformerSet bf = BeamformerSet::empty(inst, assoc);
  bf.active[0] = 1;
  bf.v[0] = 0.2 * detail::matched_direction(h);  // weak start, far from the cap

  WmmseOptions wo;
  wo.max_iters = 60;
  wo.tol = 1e-12;
  std::vector<double> w(1, 1.0);
  WmmseCellResult r = wmmse_percell(inst, assoc, bf, 0, {0}, w, 2.0, wo);

  double closed = inst.bandwidth_hz * std::log2(1.0 + 2.0 * h.squaredNorm() / 0.5) / 1e6;
  CHECK(r.weighted_sum_rate == Approx(closed).epsilon(1e-6));
  CHECK(bf.v[0].squaredNorm() == Approx(2.0).epsilon(1e-6));
}

TEST_CASE("orthogonal two-user cell matches the scalar power-split oracle") {
  Eigen::MatrixXd gain(2, 1);
  gain << 1.0, 1.0;
  Eigen::VectorXd pmax(1);
  pmax << 2.0;
  NetworkInstance inst = testutil::make_instance(gain, pmax, 0.5);
  inst.bs_antennas = {2};
  inst.user_antennas = {1, 1};
  Eigen::MatrixXcd h1(1, 2), h2(1, 2);
  h1 << 3.0, 0.0;
  h2 << 0.0, 2.0;
  inst.mimo_channels = {h1, h2};

  Association assoc = Association::from_bs_of({0, 0}, 1);
  std::vector<double> w = {1.0, 2.0};

  // channels are orthogonal, so the optimum lives on a clean power split
  const double wband = inst.bandwidth_hz / 1e6;
  double oracle = -1.0;
  for (int t = 0; t <= 4000; ++t) {
    double theta = t / 4000.0;
    double f = w[0] * wband * std::log2(1.0 + 9.0 * theta * 2.0 / 0.5) +
               w[1] * wband * std::log2(1.0 + 4.0 * (1.0 - theta) * 2.0 / 0.5);
    oracle = std::max(oracle, f);
  }

  BeamformerSet bf = matched_start(inst, assoc);
  WmmseOptions wo;
  wo.max_iters = 200;
  wo.tol = 1e-12;
  wo.record_trace = true;
  WmmseCellResult r = wmmse_percell(inst, assoc, bf, 0, {0, 1}, w, 2.0, wo);

  CHECK(r.weighted_sum_rate >= oracle - 1e-4);
  CHECK(r.weighted_sum_rate <= oracle + 1e-6);
  for (std::size_t t = 1; t < r.trace.size(); ++t)
    CHECK(r.trace[t] >= r.trace[t - 1] - 1e-12);
  // all of the budget is spent at the optimum
  CHECK(bf.v[0].squaredNorm() + bf.v[1].squaredNorm() == Approx(2.0).epsilon(1e-6));
}

TEST_CASE("candidate selection takes the top weighted nominal rates") {
  Association assoc = Association::from_bs_of({0, 0, 0, 0}, 1);
  SchedulerState sched;
  sched.weight = {1.0, 1.0, 2.0, 0.5};
  sched.avg_rate_mbps = {1.0, 1.0, 0.5, 2.0};
  sched.candidates_per_bs = {2};
  std::vector<double> nominal = {1.0, 2.0, 1.0, 4.0};  // scores 1, 2, 2, 2
  auto cand = select_candidates(assoc, sched, nominal);
  REQUIRE(cand.size() == 1u);
  CHECK(cand[0] == std::vector<int>{1, 2});  // tie resolved to lower indices

  sched.candidates_per_bs = {10};
  auto all = select_candidates(assoc, sched, nominal);
  CHECK(all[0] == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("two-stage run keeps its books straight") {
  NetworkInstance inst = small_mimo(6, 2, 2, 33);
  TwoStageOptions opts;
  opts.candidates_per_bs = 2;
  opts.max_slots = 30;
  TwoStageResult res = two_stage_solve(inst, opts);

  CHECK(res.association_changes == 0);
  REQUIRE(!res.slots.empty());
  const int K = inst.num_users;

  // replay the exponential averaging from the recorded slot rates
  std::vector<double> avg = res.nominal_mbps;
  for (const auto& rec : res.slots) {
    int per_bs0 = 0, per_bs1 = 0;
    for (int i = 0; i < K; ++i) {
      if (rec.scheduled[i]) {
        (res.assoc.bs_of[i] == 0 ? per_bs0 : per_bs1)++;
        CHECK(rec.rate_mbps[i] >= 0.0);
      } else {
        CHECK(rec.rate_mbps[i] == 0.0);
      }
      avg[i] = 0.9 * avg[i] + 0.1 * rec.rate_mbps[i];
    }
    CHECK(per_bs0 <= 2);
    CHECK(per_bs1 <= 2);
  }
  double util = 0.0;
  for (int i = 0; i < K; ++i) {
    CHECK(avg[i] == Approx(res.sched.avg_rate_mbps[i]).epsilon(1e-12));
    util += std::log(avg[i]);
  }
  CHECK(util == Approx(res.utility).epsilon(1e-12));

  // per-cell improvement certificate; slots spend at most the stage-1
  // allocation, which itself respects the cap
  CHECK(res.min_cell_trace_slack >= -1e-9);
  for (int j = 0; j < inst.num_bs; ++j) {
    double tot = 0.0;
    for (int i = 0; i < K; ++i)
      if (res.assoc.bs_of[i] == j && res.beams.active[i]) tot += res.beams.v[i].squaredNorm();
    CHECK(res.psd(j) <= inst.max_psd_mw(j) * (1.0 + 1e-12));
    CHECK(tot <= res.psd(j) * (1.0 + 1e-9));
  }
}

TEST_CASE("strongest-SINR stage-2 arm produces a comparable report shape") {
  NetworkInstance inst = small_mimo(6, 2, 2, 47);
  TwoStageOptions opts;
  opts.candidates_per_bs = 2;
  opts.max_slots = 20;
  TwoStageResult res = maxsinr_wmmse_solve(inst, opts);
  CHECK(std::isfinite(res.utility));
  CHECK(!res.slots.empty());
  CHECK(res.min_cell_trace_slack >= -1e-9);
  for (double r : res.sched.avg_rate_mbps) CHECK(r > 0.0);
}
