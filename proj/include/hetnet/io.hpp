#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "hetnet/netmodel.hpp"

namespace hetnet {

inline constexpr int kInstanceFormatVersion = 1;

// Shortest round-trippable decimal form.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Write via a sibling temp file and rename, so readers never see a torn file.
inline void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.flush()) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

// Minimal INI dialect: [section] headers, key = value lines, # or ; comments,
// blank lines ignored.  Unknown keys are rejected by the appliers, not here.
inline ConfigSections parse_config_text(const std::string& text) {
  ConfigSections sections;
  std::string cur = "network";
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c); };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  };
  while (std::getline(in, line)) {
    lineno++;
    auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section");
      cur = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key or value");
    sections[cur][key] = val;
  }
  return sections;
}

inline ConfigSections parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace detail {
inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": not a number: " + v);
  }
}
inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": not an integer: " + v);
  }
}
inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key " + key + ": not a boolean: " + v);
}
}  // namespace detail

// Applies the [network] section onto a config, rejecting unknown keys.
inline void apply_network_section(const ConfigSections& sections, NetworkConfig& cfg) {
  auto it = sections.find("network");
  if (it == sections.end()) return;
  for (const auto& [key, val] : it->second) {
    using detail::to_bool;
    using detail::to_double;
    using detail::to_int;
    if (key == "num_cells") cfg.num_cells = static_cast<int>(to_int(key, val));
    else if (key == "picos_per_cell") cfg.picos_per_cell = static_cast<int>(to_int(key, val));
    else if (key == "users_per_cell") cfg.users_per_cell = static_cast<int>(to_int(key, val));
    else if (key == "inter_site_distance_km") cfg.inter_site_distance_km = to_double(key, val);
    else if (key == "bandwidth_hz") cfg.bandwidth_hz = to_double(key, val);
    else if (key == "noise_psd_dbm_hz") cfg.noise_psd_dbm_hz = to_double(key, val);
    else if (key == "macro_max_psd_dbm_hz") cfg.macro_max_psd_dbm_hz = to_double(key, val);
    else if (key == "pico_max_psd_dbm_hz") cfg.pico_max_psd_dbm_hz = to_double(key, val);
    else if (key == "antenna_gain_dbi") cfg.antenna_gain_dbi = to_double(key, val);
    else if (key == "shadowing_sigma_db") cfg.shadowing_sigma_db = to_double(key, val);
    else if (key == "snr_gap_db") cfg.snr_gap_db = to_double(key, val);
    else if (key == "min_user_bs_distance_km") cfg.min_user_bs_distance_km = to_double(key, val);
    else if (key == "wraparound") cfg.wraparound = to_bool(key, val);
    else if (key == "bs_antennas") cfg.bs_antennas = static_cast<int>(to_int(key, val));
    else if (key == "user_antennas") cfg.user_antennas = static_cast<int>(to_int(key, val));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, val));
    else throw std::invalid_argument("unknown [network] key: " + key);
  }
}

inline nlohmann::json instance_to_json(const NetworkInstance& inst) {
  nlohmann::json j;
  j["version"] = kInstanceFormatVersion;
  j["num_users"] = inst.num_users;
  j["num_bs"] = inst.num_bs;
  j["bandwidth_hz"] = inst.bandwidth_hz;
  j["snr_gap"] = inst.snr_gap;
  j["noise_psd_mw"] = inst.noise_psd_mw;
  j["seed"] = inst.seed;
  j["max_psd_mw"] = std::vector<double>(inst.max_psd_mw.data(),
                                        inst.max_psd_mw.data() + inst.max_psd_mw.size());
  std::vector<std::string> tiers;
  for (auto t : inst.tier) tiers.push_back(t == BsTier::macro ? "macro" : "pico");
  j["tier"] = tiers;
  j["cell_of_bs"] = inst.cell_of_bs;
  j["cell_of_user"] = inst.cell_of_user;
  auto points = [](const std::vector<Point>& ps) {
    std::vector<std::vector<double>> v;
    for (const auto& p : ps) v.push_back({p.x, p.y});
    return v;
  };
  j["bs_pos_km"] = points(inst.bs_pos);
  j["user_pos_km"] = points(inst.user_pos);
  j["bs_antennas"] = inst.bs_antennas;
  j["user_antennas"] = inst.user_antennas;
  std::vector<std::vector<double>> gain;
  for (int i = 0; i < inst.num_users; ++i) {
    std::vector<double> row(inst.num_bs);
    for (int l = 0; l < inst.num_bs; ++l) row[l] = inst.gain(i, l);
    gain.push_back(std::move(row));
  }
  j["gain"] = gain;
  if (inst.has_mimo()) {
    // row-major [re, im] pairs per (user, bs) block
    std::vector<std::vector<std::vector<double>>> chans;
    for (const auto& h : inst.mimo_channels) {
      std::vector<std::vector<double>> entries;
      for (int r = 0; r < h.rows(); ++r)
        for (int c = 0; c < h.cols(); ++c)
          entries.push_back({h(r, c).real(), h(r, c).imag()});
      chans.push_back(std::move(entries));
    }
    j["mimo_channels"] = chans;
  }
  return j;
}

inline NetworkInstance instance_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j["version"].get<int>() != kInstanceFormatVersion)
    throw std::invalid_argument("unsupported instance format version");
  NetworkInstance inst;
  inst.num_users = j.at("num_users").get<int>();
  inst.num_bs = j.at("num_bs").get<int>();
  inst.bandwidth_hz = j.at("bandwidth_hz").get<double>();
  inst.snr_gap = j.at("snr_gap").get<double>();
  inst.noise_psd_mw = j.at("noise_psd_mw").get<double>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  auto psd = j.at("max_psd_mw").get<std::vector<double>>();
  inst.max_psd_mw = Eigen::Map<Eigen::VectorXd>(psd.data(), psd.size());
  for (const auto& t : j.at("tier").get<std::vector<std::string>>())
    inst.tier.push_back(t == "macro" ? BsTier::macro : BsTier::pico);
  inst.cell_of_bs = j.at("cell_of_bs").get<std::vector<int>>();
  inst.cell_of_user = j.at("cell_of_user").get<std::vector<int>>();
  for (const auto& p : j.at("bs_pos_km")) inst.bs_pos.push_back({p[0], p[1]});
  for (const auto& p : j.at("user_pos_km")) inst.user_pos.push_back({p[0], p[1]});
  inst.bs_antennas = j.at("bs_antennas").get<std::vector<int>>();
  inst.user_antennas = j.at("user_antennas").get<std::vector<int>>();
  inst.gain.resize(inst.num_users, inst.num_bs);
  const auto& gain = j.at("gain");
  for (int i = 0; i < inst.num_users; ++i)
    for (int l = 0; l < inst.num_bs; ++l) inst.gain(i, l) = gain[i][l].get<double>();
  if (j.contains("mimo_channels")) {
    const auto& chans = j["mimo_channels"];
    for (int i = 0; i < inst.num_users; ++i) {
      for (int l = 0; l < inst.num_bs; ++l) {
        int n = inst.user_antennas[i], m = inst.bs_antennas[l];
        Eigen::MatrixXcd h(n, m);
        const auto& entries = chans[static_cast<std::size_t>(i) * inst.num_bs + l];
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < m; ++c) {
            const auto& e = entries[static_cast<std::size_t>(r) * m + c];
            h(r, c) = {e[0].get<double>(), e[1].get<double>()};
          }
        inst.mimo_channels.push_back(std::move(h));
      }
    }
  }
  return inst;
}

inline void save_instance(const NetworkInstance& inst, const std::string& path) {
  atomic_write_file(path, instance_to_json(inst).dump(2) + "\n");
}

inline NetworkInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read instance file " + path);
  nlohmann::json j;
  in >> j;
  return instance_from_json(j);
}

}  // namespace hetnet
