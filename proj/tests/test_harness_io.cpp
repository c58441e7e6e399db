#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "hetnet/harness.hpp"
#include "hetnet/io.hpp"
#include "test_util.hpp"

using namespace hetnet;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path(fs::current_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

NetworkConfig tiny_scenario() {
  NetworkConfig cfg;
  cfg.num_cells = 1;
  cfg.picos_per_cell = 1;
  cfg.users_per_cell = 8;
  cfg.wraparound = false;
  return cfg;
}

}  // namespace

TEST_CASE("exhaustive search resolves ties to the first assignment found") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 1, 0;
  OracleResult best = exhaustive_oracle(a);
  // splitting beats pairing: 1+0 vs 2-2ln2; the (0,1) split enumerates first
  CHECK(best.utility == Approx(1.0).epsilon(1e-12));
  CHECK(best.assoc.bs_of == std::vector<int>{0, 1});

  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(30, 3);
  CHECK_THROWS_AS(exhaustive_oracle(big), std::invalid_argument);
}

TEST_CASE("joint brute force stays consistent and beats the naive point") {
  Rng rng(601);
  NetworkInstance inst = testutil::random_instance(rng, 3, 2);
  JointOracleResult best = joint_brute_oracle(inst, 8);
  CHECK(best.utility == Approx(network_utility(inst, best.assoc, best.psd)).epsilon(1e-12));
  Association naive = max_sinr_association(inst, inst.max_psd_mw);
  CHECK(best.utility >= network_utility(inst, naive, inst.max_psd_mw) - 1e-9);
  CHECK_THROWS_AS(joint_brute_oracle(inst, 2000), std::invalid_argument);
}

TEST_CASE("percentiles interpolate linearly on the sorted sample") {
  std::vector<double> v = {10, 20, 30, 40};
  CHECK(percentile(v, 50) == Approx(25.0).epsilon(1e-12));
  CHECK(percentile(v, 0) == Approx(10.0).epsilon(1e-12));
  CHECK(percentile(v, 100) == Approx(40.0).epsilon(1e-12));
  std::vector<double> u;
  for (int i = 1; i <= 100; ++i) u.push_back(i);
  CHECK(percentile(u, 5) == Approx(5.95).epsilon(1e-12));
  CHECK_THROWS_AS(percentile({}, 50), std::invalid_argument);
}

TEST_CASE("config text parses sections, comments, and defaults") {
  std::string text =
      "users_per_cell = 12   # trailing comment\n"
      "\n"
      "; full-line comment\n"
      "[network]\n"
      "num_cells = 3\n"
      "wraparound = false\n"
      "shadowing_sigma_db = 6.5\n"
      "[dcd]\n"
      "tol = 1e-8\n";
  ConfigSections s = parse_config_text(text);
  CHECK(s.at("network").at("users_per_cell") == "12");
  CHECK(s.at("network").at("num_cells") == "3");
  CHECK(s.at("dcd").at("tol") == "1e-8");

  NetworkConfig cfg;
  apply_network_section(s, cfg);
  CHECK(cfg.users_per_cell == 12);
  CHECK(cfg.num_cells == 3);
  CHECK(cfg.wraparound == false);
  CHECK(cfg.shadowing_sigma_db == Approx(6.5));

  CHECK_THROWS_AS(parse_config_text("key_without_value\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("[broken\nx = 1\n"), std::invalid_argument);
  NetworkConfig cfg2;
  CHECK_THROWS_AS(apply_network_section(parse_config_text("no_such_key = 1\n"), cfg2),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_network_section(parse_config_text("num_cells = four\n"), cfg2),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_network_section(parse_config_text("wraparound = maybe\n"), cfg2),
                  std::invalid_argument);
}

TEST_CASE("instances survive a save and load byte for byte") {
  TmpDir tmp("io_roundtrip_tmp");
  NetworkConfig cfg = tiny_scenario();
  cfg.bs_antennas = 2;
  cfg.user_antennas = 2;
  cfg.seed = 5;
  NetworkInstance inst = gen_topology(cfg);
  REQUIRE(inst.has_mimo());

  std::string path = (tmp.path / "inst.json").string();
  save_instance(inst, path);
  NetworkInstance back = load_instance(path);

  REQUIRE(back.num_users == inst.num_users);
  REQUIRE(back.num_bs == inst.num_bs);
  CHECK(back.gain == inst.gain);
  CHECK(back.max_psd_mw == inst.max_psd_mw);
  CHECK(back.noise_psd_mw == inst.noise_psd_mw);
  CHECK(back.snr_gap == inst.snr_gap);
  CHECK(back.bandwidth_hz == inst.bandwidth_hz);
  CHECK(back.tier == inst.tier);
  CHECK(back.cell_of_user == inst.cell_of_user);
  REQUIRE(back.mimo_channels.size() == inst.mimo_channels.size());
  for (std::size_t k = 0; k < inst.mimo_channels.size(); ++k)
    CHECK(back.mimo_channels[k] == inst.mimo_channels[k]);

  // a second save of the loaded instance is byte-identical
  std::string path2 = (tmp.path / "inst2.json").string();
  save_instance(back, path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("atomic writes land complete and leave no debris") {
  TmpDir tmp("atomic_write_tmp");
  fs::path target = tmp.path / "deep" / "nested" / "out.txt";
  atomic_write_file(target.string(), "first\n");
  CHECK(slurp(target) == "first\n");
  atomic_write_file(target.string(), "second\n");
  CHECK(slurp(target) == "second\n");
  CHECK(!fs::exists(target.string() + ".tmp"));
}

TEST_CASE("experiment runs are deterministic and schedule independent") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario();
  spec.methods = {"max-sinr", "dcd", "subgradient"};
  spec.seeds = {1, 2, 3};
  spec.trace = true;

  TmpDir tmp1("exp_run1_tmp");
  TmpDir tmp2("exp_run2_tmp");

  setenv("HETNET_THREADS", "1", 1);
  spec.out_dir = tmp1.path.string();
  Report r1 = run_experiment(spec);
  setenv("HETNET_THREADS", "2", 1);
  spec.out_dir = tmp2.path.string();
  Report r2 = run_experiment(spec);
  unsetenv("HETNET_THREADS");

  CHECK(slurp(tmp1.path / "summary.json") == slurp(tmp2.path / "summary.json"));
  for (const auto& m : spec.methods) {
    REQUIRE(r1.methods.at(m).per_seed.size() == 3u);
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& a = r1.methods.at(m).per_seed[s];
      const auto& b = r2.methods.at(m).per_seed[s];
      CHECK(a.report.utility == b.report.utility);  // bitwise reproducible
      CHECK(a.utility_check_ok);
      CHECK(b.utility_check_ok);
    }
    CHECK(slurp(tmp1.path / (m + "_seed2_rates.csv")) ==
          slurp(tmp2.path / (m + "_seed2_rates.csv")));
  }

  // traced methods leave a trace file with the promised header
  std::string dcd_trace = slurp(tmp1.path / "dcd_seed1_trace.csv");
  CHECK(dcd_trace.rfind("iteration,updated_bs,dual_objective,primal_utility\n", 0) == 0);
  std::string sub_trace = slurp(tmp1.path / "subgradient_seed1_trace.csv");
  CHECK(sub_trace.rfind("iteration,dual_objective,best_dual,step\n", 0) == 0);

  // summary carries solver metrics
  auto j = nlohmann::json::parse(slurp(tmp1.path / "summary.json"));
  CHECK(j["methods"]["dcd"]["per_seed"][0].contains("gap_bound"));
  CHECK(j["methods"]["dcd"]["mean_utility"].get<double>() ==
        Approx(r1.methods.at("dcd").mean_utility));
}

TEST_CASE("worker cap env variable is validated") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario();
  spec.methods = {"max-sinr"};
  spec.seeds = {1};
  setenv("HETNET_THREADS", "abc", 1);
  CHECK_THROWS_AS(run_experiment(spec), std::invalid_argument);
  setenv("HETNET_THREADS", "0", 1);
  CHECK_THROWS_AS(run_experiment(spec), std::invalid_argument);
  unsetenv("HETNET_THREADS");
  CHECK_NOTHROW(run_experiment(spec));
}

TEST_CASE("experiment specs reject nonsense up front") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario();
  spec.methods = {"no-such-method"};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.methods = {"two-stage"};  // single-antenna scenario cannot run it
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.methods = {"dcd"};
  spec.seeds = {};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.seeds = {1};
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("custom instance generators feed the harness") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario();
  spec.scenario.bs_antennas = 2;
  spec.scenario.user_antennas = 2;
  spec.scenario.users_per_cell = 6;
  spec.methods = {"two-stage"};
  spec.seeds = {4};
  spec.two_stage.max_slots = 10;
  spec.two_stage.candidates_per_bs = 2;
  int calls = 0;
  spec.instance_gen = [&calls](const NetworkConfig& cfg) {
    calls++;
    CHECK(cfg.seed == 4);  // the per-seed substitution reached the generator
    return gen_topology(cfg);
  };
  Report r = run_experiment(spec);
  CHECK(calls == 1);
  const auto& seed_res = r.methods.at("two-stage").per_seed.at(0);
  CHECK(seed_res.utility_check_ok);
  CHECK(seed_res.metrics.at("min_cell_trace_slack") >= -1e-9);
}
