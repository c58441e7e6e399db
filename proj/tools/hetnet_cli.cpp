// Command-line front end: scenario generation, association solvers, joint
// association+power, MIMO scheduling, brute-force oracles, and timing runs.
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#include <chrono>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetnet/harness.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = std::stoull(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("bad seed list: " + s);
    seeds.push_back(v);
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

double get_d(const std::map<std::string, std::string>& sec, const std::string& key, double dflt) {
  auto it = sec.find(key);
  return it == sec.end() ? dflt : hetnet::detail::to_double(key, it->second);
}
long long get_i(const std::map<std::string, std::string>& sec, const std::string& key,
                long long dflt) {
  auto it = sec.find(key);
  return it == sec.end() ? dflt : hetnet::detail::to_int(key, it->second);
}

// Solver knob sections; unknown keys inside a known section are rejected.
void apply_solver_sections(const hetnet::ConfigSections& sections, hetnet::ExperimentSpec& spec) {
  for (const auto& [name, sec] : sections) {
    if (name == "network") continue;
    if (name == "dcd") {
      for (const auto& [k, v] : sec) {
        if (k == "tol") spec.dcd.tol = hetnet::detail::to_double(k, v);
        else if (k == "max_sweeps") spec.dcd.max_sweeps = int(hetnet::detail::to_int(k, v));
        else if (k == "randomized_order") spec.dcd.randomized_order = hetnet::detail::to_bool(k, v);
        else if (k == "tie_break_exhaustive_limit")
          spec.dcd.tie_break.tie_break_exhaustive_limit = int(hetnet::detail::to_int(k, v));
        else throw std::invalid_argument("unknown [dcd] key: " + k);
      }
    } else if (name == "subgradient") {
      for (const auto& [k, v] : sec) {
        if (k == "rule") {
          if (v == "diminishing") spec.subgradient.rule = hetnet::SubgradientConfig::Rule::diminishing;
          else if (v == "adaptive") spec.subgradient.rule = hetnet::SubgradientConfig::Rule::adaptive_level;
          else throw std::invalid_argument("[subgradient] rule must be diminishing or adaptive");
        } else if (k == "alpha0") spec.subgradient.alpha0 = hetnet::detail::to_double(k, v);
        else if (k == "rho") spec.subgradient.rho = hetnet::detail::to_double(k, v);
        else if (k == "beta") spec.subgradient.beta = hetnet::detail::to_double(k, v);
        else if (k == "delta") spec.subgradient.delta = hetnet::detail::to_double(k, v);
        else if (k == "delta_init") spec.subgradient.delta_init = hetnet::detail::to_double(k, v);
        else if (k == "level_gain") spec.subgradient.level_gain = hetnet::detail::to_double(k, v);
        else if (k == "max_iters") spec.subgradient.max_iters = int(hetnet::detail::to_int(k, v));
        else throw std::invalid_argument("unknown [subgradient] key: " + k);
      }
    } else if (name == "newton") {
      spec.newton.max_outer_iters = int(get_i(sec, "max_outer_iters", spec.newton.max_outer_iters));
      spec.newton.grad_tol = get_d(sec, "grad_tol", spec.newton.grad_tol);
      for (const auto& [k, v] : sec)
        if (k != "max_outer_iters" && k != "grad_tol")
          throw std::invalid_argument("unknown [newton] key: " + k);
    } else if (name == "joint") {
      spec.joint.max_rounds = int(get_i(sec, "max_rounds", spec.joint.max_rounds));
      spec.joint.utility_tol = get_d(sec, "utility_tol", spec.joint.utility_tol);
      for (const auto& [k, v] : sec)
        if (k != "max_rounds" && k != "utility_tol")
          throw std::invalid_argument("unknown [joint] key: " + k);
    } else if (name == "direct_dual") {
      spec.direct_dual.num_starts = int(get_i(sec, "num_starts", spec.direct_dual.num_starts));
      spec.direct_dual.inner_alternations =
          int(get_i(sec, "inner_alternations", spec.direct_dual.inner_alternations));
      spec.direct_dual.bisection_tol = get_d(sec, "bisection_tol", spec.direct_dual.bisection_tol);
      spec.direct_dual.max_outer_sweeps =
          int(get_i(sec, "max_outer_sweeps", spec.direct_dual.max_outer_sweeps));
      spec.direct_dual.seed = std::uint64_t(get_i(sec, "seed", spec.direct_dual.seed));
      spec.direct_dual.power_call_budget =
          int(get_i(sec, "power_call_budget", spec.direct_dual.power_call_budget));
      for (const auto& [k, v] : sec)
        if (k != "num_starts" && k != "inner_alternations" && k != "bisection_tol" &&
            k != "max_outer_sweeps" && k != "seed" && k != "power_call_budget")
          throw std::invalid_argument("unknown [direct_dual] key: " + k);
    } else if (name == "mimo") {
      spec.two_stage.candidates_per_bs =
          int(get_i(sec, "candidates_per_bs", spec.two_stage.candidates_per_bs));
      spec.two_stage.ema = get_d(sec, "ema", spec.two_stage.ema);
      spec.two_stage.max_slots = int(get_i(sec, "max_slots", spec.two_stage.max_slots));
      spec.two_stage.wmmse.max_iters =
          int(get_i(sec, "wmmse_max_iters", spec.two_stage.wmmse.max_iters));
      for (const auto& [k, v] : sec)
        if (k != "candidates_per_bs" && k != "ema" && k != "max_slots" && k != "wmmse_max_iters")
          throw std::invalid_argument("unknown [mimo] key: " + k);
    } else {
      throw std::invalid_argument("unknown config section: [" + name + "]");
    }
  }
}

struct CommonArgs {
  std::string config_path;
  std::string seed_list = "1";
  std::string out_dir;
  bool trace = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_trace = true) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--seed", args.seed_list, "comma-separated seed list");
  cmd->add_option("--out", args.out_dir, "output directory");
  if (with_trace) cmd->add_flag("--trace", args.trace, "write per-iteration trace CSVs");
}

hetnet::ExperimentSpec build_spec(const CommonArgs& args) {
  hetnet::ExperimentSpec spec;
  if (!args.config_path.empty()) {
    auto sections = hetnet::parse_config_file(args.config_path);
    hetnet::apply_network_section(sections, spec.scenario);
    apply_solver_sections(sections, spec);
  }
  spec.seeds = parse_seeds(args.seed_list);
  spec.out_dir = args.out_dir;
  spec.trace = args.trace;
  return spec;
}

void print_report(const hetnet::Report& report) {
  for (const auto& [m, sum] : report.methods) {
    std::cout << m << ": mean_utility=" << hetnet::fmt_double(sum.mean_utility)
              << " p5=" << hetnet::fmt_double(sum.pooled_p5_mbps)
              << " p50=" << hetnet::fmt_double(sum.pooled_p50_mbps)
              << " p95=" << hetnet::fmt_double(sum.pooled_p95_mbps)
              << " pico_fraction=" << hetnet::fmt_double(sum.mean_pico_fraction) << '\n';
    for (const auto& r : sum.per_seed)
      if (!r.utility_check_ok)
        std::cerr << "warning: " << m << " seed " << r.seed
                  << ": reported utility does not match the rate list\n";
  }
}

int run_gen(const CommonArgs& args) {
  auto spec = build_spec(args);
  if (args.out_dir.empty()) throw std::invalid_argument("gen requires --out");
  for (auto seed : spec.seeds) {
    hetnet::NetworkConfig cfg = spec.scenario;
    cfg.seed = seed;
    hetnet::NetworkInstance inst = hetnet::gen_topology(cfg);
    std::string path = args.out_dir + "/instance_seed" + std::to_string(seed) + ".json";
    hetnet::save_instance(inst, path);
    std::cout << path << ": K=" << inst.num_users << " L=" << inst.num_bs << '\n';
  }
  return 0;
}

int run_methods(const CommonArgs& args, const std::string& method,
                const std::vector<std::string>& allowed, bool compact_preset = false,
                int candidates = 0) {
  auto spec = build_spec(args);
  if (std::find(allowed.begin(), allowed.end(), method) == allowed.end())
    throw std::invalid_argument("method " + method + " not valid for this subcommand");
  spec.methods = {method};
  if (candidates > 0) spec.two_stage.candidates_per_bs = candidates;
  if (compact_preset) {
    if (spec.scenario.bs_antennas == 1 && spec.scenario.user_antennas == 1) {
      spec.scenario.bs_antennas = 4;
      spec.scenario.user_antennas = 2;
    }
    spec.scenario.num_cells = 3;
    spec.scenario.picos_per_cell = 1;
    spec.scenario.wraparound = false;
    if (spec.scenario.users_per_cell == 30) spec.scenario.users_per_cell = 35;
    spec.instance_gen = [](const hetnet::NetworkConfig& cfg) {
      return hetnet::gen_compact_cluster(cfg);
    };
  }
  auto report = hetnet::run_experiment(spec);
  print_report(report);
  return 0;
}

int run_oracle(const CommonArgs& args, const std::string& kind) {
  auto spec = build_spec(args);
  nlohmann::json out;
  out["kind"] = kind;
  for (auto seed : spec.seeds) {
    hetnet::NetworkConfig cfg = spec.scenario;
    cfg.seed = seed;
    hetnet::NetworkInstance inst = hetnet::gen_topology(cfg);
    nlohmann::json js;
    if (kind == "assoc") {
      Eigen::MatrixXd a = hetnet::utility_matrix(inst, inst.max_psd_mw);
      auto oracle = hetnet::exhaustive_oracle(a);
      auto dcd = hetnet::dcd_solve(a);
      js["oracle_utility"] = oracle.utility;
      js["dcd_utility"] = dcd.utility;
      js["dcd_dual"] = dcd.dual.dual_objective;
      js["dcd_gap_bound"] = dcd.gap_bound;
      js["within_bound"] = dcd.utility >= oracle.utility - dcd.gap_bound - 1e-9;
    } else if (kind == "joint") {
      auto oracle = hetnet::joint_brute_oracle(inst);
      auto dd = hetnet::direct_dual_solve(inst, spec.direct_dual);
      js["oracle_utility"] = oracle.utility;
      js["direct_dual_utility"] = dd.utility;
      js["direct_dual_bound"] = dd.dual.dual_objective;
    } else {
      throw std::invalid_argument("oracle kind must be assoc or joint");
    }
    out["seeds"][std::to_string(seed)] = js;
  }
  std::string text = out.dump(2) + "\n";
  if (!args.out_dir.empty())
    hetnet::atomic_write_file(args.out_dir + "/oracle.json", text);
  std::cout << text;
  return 0;
}

int run_bench(const CommonArgs& args) {
  auto spec = build_spec(args);
  using clock = std::chrono::steady_clock;
  std::ostringstream csv;
  csv << "method,seed,iterations,total_ms,ms_per_iteration\n";
  for (auto seed : spec.seeds) {
    hetnet::NetworkConfig cfg = spec.scenario;
    cfg.seed = seed;
    hetnet::NetworkInstance inst = hetnet::gen_topology(cfg);
    Eigen::MatrixXd a = hetnet::utility_matrix(inst, inst.max_psd_mw);

    auto t0 = clock::now();
    auto dcd = hetnet::dcd_solve(a, spec.dcd);
    double dcd_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    csv << "dcd," << seed << ',' << dcd.iterations << ',' << hetnet::fmt_double(dcd_ms) << ','
        << hetnet::fmt_double(dcd_ms / std::max(1, dcd.iterations)) << '\n';

    t0 = clock::now();
    auto sub = hetnet::subgradient_solve(a, spec.subgradient);
    double sub_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    csv << "subgradient," << seed << ',' << sub.iterations << ',' << hetnet::fmt_double(sub_ms)
        << ',' << hetnet::fmt_double(sub_ms / std::max(1, sub.iterations)) << '\n';

    auto assoc = dcd.assoc;
    t0 = clock::now();
    auto nt = hetnet::newton_power_solve(inst, assoc, inst.max_psd_mw, spec.newton);
    double nt_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    csv << "newton," << seed << ',' << nt.iterations << ',' << hetnet::fmt_double(nt_ms) << ','
        << hetnet::fmt_double(nt_ms / std::max(1, nt.iterations)) << '\n';
  }
  if (!args.out_dir.empty()) hetnet::atomic_write_file(args.out_dir + "/bench.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pricing-based user association simulator for downlink HetNets"};
  app.require_subcommand(1);

  CommonArgs gen_args, assoc_args, joint_args, mimo_args, oracle_args, bench_args;
  std::string assoc_method = "dcd", joint_method = "joint-dcd", mimo_method = "two-stage";
  std::string oracle_kind = "assoc";
  bool mimo_compact = false;
  int mimo_candidates = 0;

  auto* gen = app.add_subcommand("gen", "generate and export scenario instances");
  add_common(gen, gen_args, false);

  auto* assoc = app.add_subcommand("assoc", "association at fixed (max) power");
  add_common(assoc, assoc_args);
  assoc->add_option("--method", assoc_method, "max-sinr | dcd | subgradient");

  auto* joint = app.add_subcommand("joint", "joint association and power control");
  add_common(joint, joint_args);
  joint->add_option("--method", joint_method, "joint-dcd | joint-maxsinr | direct-dual");

  auto* mimo = app.add_subcommand("mimo", "two-stage association and beamforming");
  add_common(mimo, mimo_args);
  mimo->add_option("--method", mimo_method, "two-stage | maxsinr-wmmse");
  mimo->add_option("--candidates", mimo_candidates, "per-BS candidate count");
  mimo->add_flag("--preset-compact", mimo_compact,
                 "3-macro/4-pico cluster, 35 users/cell, 4x2 antennas");

  auto* oracle = app.add_subcommand("oracle", "brute-force checks on tiny scenarios");
  add_common(oracle, oracle_args, false);
  oracle->add_option("--kind", oracle_kind, "assoc | joint");

  auto* bench = app.add_subcommand("bench", "per-iteration timing comparison");
  add_common(bench, bench_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen(gen_args);
    if (assoc->parsed())
      return run_methods(assoc_args, assoc_method, {"max-sinr", "dcd", "subgradient"});
    if (joint->parsed())
      return run_methods(joint_args, joint_method, {"joint-dcd", "joint-maxsinr", "direct-dual"});
    if (mimo->parsed())
      return run_methods(mimo_args, mimo_method, {"two-stage", "maxsinr-wmmse"}, mimo_compact,
                         mimo_candidates);
    if (oracle->parsed()) return run_oracle(oracle_args, oracle_kind);
    if (bench->parsed()) return run_bench(bench_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
