#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hetnet/baselines.hpp"
#include "hetnet/dcd.hpp"
#include "hetnet/io.hpp"
#include "hetnet/joint.hpp"
#include "hetnet/mimo.hpp"
#include "hetnet/netmodel.hpp"
#include "hetnet/powerctl.hpp"

namespace hetnet {

struct OracleResult {
  Association assoc;
  double utility = -std::numeric_limits<double>::infinity();
};

// Full enumeration of the association space with the log-rate matrix fixed.
// Strict improvements only, so equal optima resolve to the lexicographically
// first assignment.  Refuses problems beyond the enumeration guard.
inline OracleResult exhaustive_oracle(const Eigen::MatrixXd& a, double max_enumerations = 1e6) {
  const int K = static_cast<int>(a.rows());
  const int L = static_cast<int>(a.cols());
  if (std::pow(static_cast<double>(L), K) > max_enumerations)
    throw std::invalid_argument("exhaustive_oracle: L^K exceeds the enumeration guard");
  OracleResult best;
  std::vector<int> bs_of(K, 0);
  while (true) {
    Association assoc = Association::from_bs_of(bs_of, L);
    double u = association_utility(a, assoc);
    if (u > best.utility) {
      best.utility = u;
      best.assoc = std::move(assoc);
    }
    int d = K - 1;
    while (d >= 0) {
      if (++bs_of[d] < L) break;
      bs_of[d] = 0;
      --d;
    }
    if (d < 0) break;
  }
  return best;
}

struct JointOracleResult {
  Association assoc;
  Eigen::VectorXd psd;
  double utility = -std::numeric_limits<double>::infinity();
};

// Associations crossed with a per-BS power grid (0 and the cap included),
// best grid point polished by the Newton ascent.  Tiny instances only.
inline JointOracleResult joint_brute_oracle(const NetworkInstance& inst, int grid_points = 12,
                                            double max_enumerations = 2e6,
                                            const NewtonOptions& polish = {.max_outer_iters = 200,
                                                                           .grad_tol = 1e-8}) {
  const int K = inst.num_users;
  const int L = inst.num_bs;
  double combos = std::pow(static_cast<double>(L), K) * std::pow(grid_points, L);
  if (combos > max_enumerations)
    throw std::invalid_argument("joint_brute_oracle: grid exceeds the enumeration guard");

  std::vector<std::vector<double>> grid(L);
  for (int j = 0; j < L; ++j)
    for (int t = 0; t < grid_points; ++t)
      grid[j].push_back(inst.max_psd_mw(j) * t / (grid_points - 1));

  JointOracleResult best;
  std::vector<int> bs_of(K, 0);
  Eigen::VectorXd p(L);
  while (true) {
    Association assoc = Association::from_bs_of(bs_of, L);
    std::vector<int> pick(L, 0);
    while (true) {
      for (int j = 0; j < L; ++j) p(j) = grid[j][pick[j]];
      double u = network_utility(inst, assoc, p);
      if (u > best.utility) {
        best.utility = u;
        best.assoc = assoc;
        best.psd = p;
      }
      int d = L - 1;
      while (d >= 0) {
        if (++pick[d] < grid_points) break;
        pick[d] = 0;
        --d;
      }
      if (d < 0) break;
    }
    int d = K - 1;
    while (d >= 0) {
      if (++bs_of[d] < L) break;
      bs_of[d] = 0;
      --d;
    }
    if (d < 0) break;
  }
  NewtonResult nt = newton_power_solve(inst, best.assoc, best.psd, polish);
  if (nt.utility >= best.utility) {
    best.utility = nt.utility;
    best.psd = nt.psd;
  }
  return best;
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"max-sinr",     "dcd",         "subgradient",
                                             "joint-dcd",    "joint-maxsinr", "direct-dual",
                                             "two-stage",    "maxsinr-wmmse"};
  return m;
}

struct ExperimentSpec {
  NetworkConfig scenario;
  std::vector<std::string> methods{"dcd"};
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;  // empty: nothing written
  bool trace = false;
  // Optional replacement for gen_topology (the seed is already substituted
  // into the config it receives); used by non-hex scenario layouts.
  std::function<NetworkInstance(const NetworkConfig&)> instance_gen;
  DcdOptions dcd;
  SubgradientConfig subgradient;
  NewtonOptions newton;
  JointOptions joint;
  DirectDualOptions direct_dual;
  TwoStageOptions two_stage;

  void validate() const {
    scenario.validate();
    if (seeds.empty()) throw std::invalid_argument("at least one seed required");
    if (methods.empty()) throw std::invalid_argument("at least one method required");
    for (const auto& m : methods) {
      const auto& known = known_methods();
      if (std::find(known.begin(), known.end(), m) == known.end())
        throw std::invalid_argument("unknown method: " + m);
      if ((m == "two-stage" || m == "maxsinr-wmmse") &&
          scenario.bs_antennas == 1 && scenario.user_antennas == 1)
        throw std::invalid_argument(m + " needs a multi-antenna scenario");
    }
  }
};

struct MethodSeedResult {
  std::uint64_t seed = 0;
  RateReport report;
  double solver_utility = 0.0;
  bool utility_check_ok = true;  // report.utility vs solver_utility, 1e-6
  std::map<std::string, double> metrics;  // method-specific extras
  std::string trace_csv;  // populated when the spec asks for traces
};

struct MethodSummary {
  std::vector<MethodSeedResult> per_seed;  // ordered as spec.seeds
  double mean_utility = 0.0;
  double pooled_p5_mbps = 0.0;
  double pooled_p50_mbps = 0.0;
  double pooled_p95_mbps = 0.0;
  double mean_pico_fraction = 0.0;
};

struct Report {
  std::map<std::string, MethodSummary> methods;
};

namespace detail {

inline int worker_cap() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HETNET_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(std::min<long>(v, hw));
    throw std::invalid_argument("HETNET_THREADS must be a positive integer");
  }
  return static_cast<int>(hw);
}

inline std::string rates_csv(const NetworkInstance& inst, const RateReport& rep,
                             const Association& assoc) {
  std::ostringstream out;
  out << "user,bs,tier,rate_bps,rate_mbps\n";
  for (int i = 0; i < inst.num_users; ++i) {
    int j = assoc.bs_of[i];
    out << i << ',' << j << ',' << (inst.tier[j] == BsTier::macro ? "macro" : "pico") << ','
        << fmt_double(rep.rate_bps[i]) << ',' << fmt_double(rep.rate_bps[i] / 1e6) << '\n';
  }
  return out.str();
}

inline std::string dcd_trace_csv(const std::vector<DcdTraceEntry>& trace) {
  std::ostringstream out;
  out << "iteration,updated_bs,dual_objective,primal_utility\n";
  for (const auto& e : trace) {
    out << e.iteration << ',' << e.updated_bs << ',' << fmt_double(e.dual_objective) << ',';
    if (std::isnan(e.primal_utility))
      out << "";
    else
      out << fmt_double(e.primal_utility);
    out << '\n';
  }
  return out.str();
}

inline std::string subgradient_trace_csv(const std::vector<SubgradientTraceEntry>& trace) {
  std::ostringstream out;
  out << "iteration,dual_objective,best_dual,step\n";
  for (const auto& e : trace)
    out << e.iteration << ',' << fmt_double(e.dual_objective) << ',' << fmt_double(e.best_dual)
        << ',' << fmt_double(e.step) << '\n';
  return out.str();
}

inline std::string newton_trace_csv(const std::vector<NewtonTraceEntry>& trace) {
  std::ostringstream out;
  out << "iteration,utility,step,max_projected_gradient\n";
  for (const auto& e : trace)
    out << e.iteration << ',' << fmt_double(e.utility) << ',' << fmt_double(e.step) << ','
        << fmt_double(e.max_kkt) << '\n';
  return out.str();
}

inline std::string joint_trace_csv(const std::vector<JointTraceEntry>& trace) {
  std::ostringstream out;
  out << "round,utility,macro_user_fraction,mean_macro_psd_mw,mean_pico_psd_mw\n";
  for (const auto& e : trace)
    out << e.round << ',' << fmt_double(e.utility) << ',' << fmt_double(e.macro_user_fraction)
        << ',' << fmt_double(e.mean_macro_psd) << ',' << fmt_double(e.mean_pico_psd) << '\n';
  return out.str();
}

inline std::string slots_csv(const TwoStageResult& ts) {
  std::ostringstream out;
  out << "slot,user,bs,scheduled,rate_mbps\n";
  const int K = static_cast<int>(ts.assoc.bs_of.size());
  for (const auto& rec : ts.slots)
    for (int i = 0; i < K; ++i)
      out << rec.slot << ',' << i << ',' << ts.assoc.bs_of[i] << ','
          << int(rec.scheduled[i]) << ',' << fmt_double(rec.rate_mbps[i]) << '\n';
  return out.str();
}

// Long-run MIMO report: the averaged rates play the role of the rate list.
inline RateReport mimo_report(const NetworkInstance& inst, const TwoStageResult& ts) {
  RateReport rep;
  rep.load = ts.assoc.load;
  int on_pico = 0;
  for (int i = 0; i < inst.num_users; ++i) {
    double bps = ts.sched.avg_rate_mbps[i] * 1e6;
    rep.rate_bps.push_back(bps);
    rep.utility += std::log(ts.sched.avg_rate_mbps[i]);
    if (inst.tier[ts.assoc.bs_of[i]] == BsTier::pico) on_pico++;
  }
  rep.pico_user_fraction = static_cast<double>(on_pico) / inst.num_users;
  rep.cdf_points = rep.rate_bps;
  std::sort(rep.cdf_points.begin(), rep.cdf_points.end());
  return rep;
}

inline MethodSeedResult run_one(const ExperimentSpec& spec, const std::string& method,
                                const NetworkInstance& inst, std::uint64_t seed) {
  MethodSeedResult out;
  out.seed = seed;
  const Eigen::VectorXd pmax = inst.max_psd_mw;

  if (method == "max-sinr") {
    Association assoc = max_sinr_association(inst, pmax);
    out.report = make_rate_report(inst, assoc, pmax);
    out.solver_utility = network_utility(inst, assoc, pmax);
  } else if (method == "dcd") {
    DcdOptions o = spec.dcd;
    o.record_trace = spec.trace;
    Eigen::MatrixXd a = utility_matrix(inst, pmax);
    DcdResult r = dcd_solve(a, o);
    out.report = make_rate_report(inst, r.assoc, pmax);
    out.solver_utility = r.utility;
    out.metrics["dual_objective"] = r.dual.dual_objective;
    out.metrics["gap_bound"] = r.gap_bound;
    out.metrics["sweeps"] = r.sweeps;
    if (spec.trace) out.trace_csv = dcd_trace_csv(r.trace);
  } else if (method == "subgradient") {
    SubgradientConfig o = spec.subgradient;
    o.record_trace = spec.trace;
    Eigen::MatrixXd a = utility_matrix(inst, pmax);
    SubgradientResult r = subgradient_solve(a, o);
    out.report = make_rate_report(inst, r.assoc, pmax);
    out.solver_utility = r.utility;
    out.metrics["best_dual"] = r.best.dual_objective;
    if (spec.trace) out.trace_csv = subgradient_trace_csv(r.trace);
  } else if (method == "joint-dcd" || method == "joint-maxsinr") {
    JointOptions jo = spec.joint;
    jo.record_trace = true;
    JointResult r = method == "joint-dcd"
                        ? iterate_association_power(inst, pmax, jo, spec.dcd, spec.newton)
                        : iterate_maxsinr_power(inst, pmax, jo, spec.newton);
    out.report = make_rate_report(inst, r.assoc, r.psd);
    out.solver_utility = r.utility;
    out.metrics["rounds"] = r.rounds;
    if (spec.trace) out.trace_csv = joint_trace_csv(r.trace);
  } else if (method == "direct-dual") {
    DirectDualResult r = direct_dual_solve(inst, spec.direct_dual);
    out.report = make_rate_report(inst, r.assoc, r.psd);
    out.solver_utility = r.utility;
    out.metrics["dual_objective"] = r.dual.dual_objective;
    out.metrics["power_solver_calls"] = r.power_solver_calls;
    out.metrics["cost_warning"] = r.cost_warning ? 1.0 : 0.0;
  } else if (method == "two-stage" || method == "maxsinr-wmmse") {
    TwoStageResult r = method == "two-stage" ? two_stage_solve(inst, spec.two_stage)
                                             : maxsinr_wmmse_solve(inst, spec.two_stage);
    out.report = mimo_report(inst, r);
    out.solver_utility = r.utility;
    out.metrics["slots"] = r.sched.slot;
    out.metrics["min_cell_trace_slack"] = r.min_cell_trace_slack;
    if (spec.trace) out.trace_csv = slots_csv(r);
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }

  double recomputed = 0.0;
  for (double bps : out.report.rate_bps) recomputed += std::log(bps / 1e6);
  out.utility_check_ok = std::abs(recomputed - out.solver_utility) <= 1e-6;
  return out;
}

}  // namespace detail

// Runs every (seed, method) pair over per-seed instances generated from the
// scenario with the seed substituted.  Seeds run in parallel up to the
// HETNET_THREADS cap; outputs are keyed and ordered, so the report and any
// files written are independent of the schedule.
inline Report run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int workers =
      std::min<int>(detail::worker_cap(), static_cast<int>(spec.seeds.size()));

  struct SeedSlot {
    std::vector<MethodSeedResult> per_method;
    std::string instance_json;
  };
  std::vector<SeedSlot> slots(spec.seeds.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);

  auto work = [&](int wid) {
    try {
      while (true) {
        std::size_t idx = next.fetch_add(1);
        if (idx >= spec.seeds.size()) return;
        NetworkConfig cfg = spec.scenario;
        cfg.seed = spec.seeds[idx];
        NetworkInstance inst = spec.instance_gen ? spec.instance_gen(cfg) : gen_topology(cfg);
        for (const auto& m : spec.methods)
          slots[idx].per_method.push_back(detail::run_one(spec, m, inst, spec.seeds[idx]));
      }
    } catch (...) {
      errors[wid] = std::current_exception();
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  Report report;
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    const std::string& m = spec.methods[mi];
    MethodSummary& sum = report.methods[m];
    std::vector<double> pooled_mbps;
    for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
      const MethodSeedResult& r = slots[si].per_method[mi];
      sum.mean_utility += r.report.utility;
      sum.mean_pico_fraction += r.report.pico_user_fraction;
      for (double bps : r.report.rate_bps) pooled_mbps.push_back(bps / 1e6);
      sum.per_seed.push_back(r);
    }
    sum.mean_utility /= static_cast<double>(spec.seeds.size());
    sum.mean_pico_fraction /= static_cast<double>(spec.seeds.size());
    sum.pooled_p5_mbps = percentile(pooled_mbps, 5);
    sum.pooled_p50_mbps = percentile(pooled_mbps, 50);
    sum.pooled_p95_mbps = percentile(pooled_mbps, 95);
  }

  if (!spec.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    for (const auto& [m, sum] : report.methods) {
      for (const auto& r : sum.per_seed) {
        std::string base = spec.out_dir + "/" + m + "_seed" + std::to_string(r.seed);
        // Rates CSV needs the association; rebuild the serving column from
        // the report's load-consistent source of truth.
        std::ostringstream rates;
        rates << "user,rate_bps,rate_mbps\n";
        for (std::size_t i = 0; i < r.report.rate_bps.size(); ++i)
          rates << i << ',' << fmt_double(r.report.rate_bps[i]) << ','
                << fmt_double(r.report.rate_bps[i] / 1e6) << '\n';
        atomic_write_file(base + "_rates.csv", rates.str());
        if (!r.trace_csv.empty()) atomic_write_file(base + "_trace.csv", r.trace_csv);
      }
    }
    nlohmann::json j;
    j["version"] = 1;
    j["seeds"] = spec.seeds;
    j["methods"] = nlohmann::json::object();
    for (const auto& [m, sum] : report.methods) {
      nlohmann::json jm;
      jm["mean_utility"] = sum.mean_utility;
      jm["mean_pico_fraction"] = sum.mean_pico_fraction;
      jm["pooled_percentiles_mbps"] = {
          {"p5", sum.pooled_p5_mbps}, {"p50", sum.pooled_p50_mbps}, {"p95", sum.pooled_p95_mbps}};
      jm["per_seed"] = nlohmann::json::array();
      for (const auto& r : sum.per_seed) {
        nlohmann::json js;
        js["seed"] = r.seed;
        js["utility"] = r.report.utility;
        js["pico_user_fraction"] = r.report.pico_user_fraction;
        js["utility_check_ok"] = r.utility_check_ok;
        for (const auto& [k, v] : r.metrics) js[k] = v;
        jm["per_seed"].push_back(js);
      }
      j["methods"][m] = jm;
    }
    atomic_write_file(spec.out_dir + "/summary.json", j.dump(2) + "\n");
  }
  return report;
}

}  // namespace hetnet
