#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetnet/common.hpp"
#include "hetnet/types.hpp"

namespace hetnet {

enum class BsTier { macro, pico };

struct Point {
  double x = 0.0;  // km
  double y = 0.0;  // km
};

inline double dist(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Scenario parameters.  PSDs and gains are dB-domain here and converted to
// linear mW/Hz once, at instance generation.
struct NetworkConfig {
  int num_cells = 7;
  int picos_per_cell = 3;
  int users_per_cell = 30;
  double inter_site_distance_km = 0.5;
  double bandwidth_hz = 10e6;
  double noise_psd_dbm_hz = -169.0;
  double macro_max_psd_dbm_hz = -27.0;
  double pico_max_psd_dbm_hz = -47.0;
  double antenna_gain_dbi = 15.0;
  double shadowing_sigma_db = 8.0;
  double snr_gap_db = 0.0;
  double min_user_bs_distance_km = 1e-3;
  bool wraparound = true;
  int bs_antennas = 1;    // transmit antennas per BS
  int user_antennas = 1;  // receive antennas per user
  std::uint64_t seed = 1;

  void validate() const {
    if (num_cells < 1) throw std::invalid_argument("num_cells must be >= 1");
    if (num_cells > 7) throw std::invalid_argument("num_cells must be <= 7 (one ring)");
    if (wraparound && num_cells != 7)
      throw std::invalid_argument("wraparound is defined for the 7-cell layout only");
    if (picos_per_cell < 0 || picos_per_cell > 3)
      throw std::invalid_argument("picos_per_cell must be in [0, 3]");
    if (users_per_cell < 1) throw std::invalid_argument("users_per_cell must be >= 1");
    if (inter_site_distance_km <= 0) throw std::invalid_argument("inter_site_distance_km must be > 0");
    if (bandwidth_hz <= 0) throw std::invalid_argument("bandwidth_hz must be > 0");
    if (snr_gap_db < 0) throw std::invalid_argument("snr_gap_db must be >= 0");
    if (min_user_bs_distance_km <= 0) throw std::invalid_argument("min_user_bs_distance_km must be > 0");
    if (bs_antennas < 1 || user_antennas < 1)
      throw std::invalid_argument("antenna counts must be >= 1");
  }
};

// One drop: slow-fading channel gains plus everything needed to evaluate
// rates.  Immutable after generation; solvers never mutate it.
struct NetworkInstance {
  int num_users = 0;  // K
  int num_bs = 0;     // L
  double bandwidth_hz = 0.0;
  double snr_gap = 1.0;        // linear, >= 1
  double noise_psd_mw = 0.0;   // mW/Hz
  Eigen::MatrixXd gain;        // K x L, linear power gain |h|^2 (slow fading)
  Eigen::VectorXd max_psd_mw;  // L, per-BS PSD cap, mW/Hz
  std::vector<BsTier> tier;    // L
  std::vector<int> cell_of_bs; // L
  std::vector<int> cell_of_user;  // K
  std::vector<Point> bs_pos;   // L
  std::vector<Point> user_pos; // K
  std::vector<int> bs_antennas;   // L, M_j
  std::vector<int> user_antennas; // K, N_i
  // Fast fading, present only when some M_j > 1 or N_i > 1: entry i*L+j is
  // the N_i x M_j channel of pair (i, j) with E||H||_F^2 = gain(i,j)*N*M.
  std::vector<Eigen::MatrixXcd> mimo_channels;
  std::uint64_t seed = 0;

  bool has_mimo() const { return !mimo_channels.empty(); }
  const Eigen::MatrixXcd& channel(int i, int j) const {
    return mimo_channels[static_cast<std::size_t>(i) * num_bs + j];
  }
};

inline double pathloss_db(double d_km) {
  return 128.1 + 37.6 * std::log10(std::max(d_km, 1e-6));
}

namespace detail {

// Pointy-top hexagon of inradius r centered at origin: faces normal to
// azimuths 0/60/120 degrees.
inline bool in_hexagon(double x, double y, double inradius) {
  const double c60 = 0.5, s60 = std::sqrt(3.0) / 2.0;
  double p0 = std::abs(x);
  double p1 = std::abs(c60 * x + s60 * y);
  double p2 = std::abs(-c60 * x + s60 * y);
  return std::max({p0, p1, p2}) <= inradius;
}

// Translation group of the 7-cell cluster: shifting by any of these maps the
// cluster onto a neighboring copy, giving torus distances.
inline std::vector<Point> cluster_shifts(double isd) {
  const double s3 = std::sqrt(3.0);
  Point t1{2.5 * isd, s3 / 2.0 * isd};
  Point t2{0.5 * isd, 1.5 * s3 * isd};  // t1 rotated by 60 degrees
  Point t3{t2.x - t1.x, t2.y - t1.y};
  return {{0.0, 0.0}, t1, {-t1.x, -t1.y}, t2, {-t2.x, -t2.y}, t3, {-t3.x, -t3.y}};
}

inline double wrapped_dist(const Point& a, const Point& b, const std::vector<Point>& shifts) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : shifts)
    best = std::min(best, std::hypot(a.x - b.x + s.x, a.y - b.y + s.y));
  return best;
}

}  // namespace detail

// Unit-variance-per-entry Rayleigh block scaled so E||H||_F^2 = g*N*M.
inline Eigen::MatrixXcd draw_rayleigh_channel(Rng& rng, double gain, int n_rx, int m_tx) {
  Eigen::MatrixXcd h(n_rx, m_tx);
  double amp = std::sqrt(gain);
  for (int r = 0; r < n_rx; ++r)
    for (int c = 0; c < m_tx; ++c) h(r, c) = amp * rng.cnormal();
  return h;
}

struct Site {
  Point pos;
  BsTier tier = BsTier::macro;
  int cell = 0;
};

// Shared drop logic: BS sites are given, users are dropped uniformly in the
// hexagon of their cell's macro, then shadowed gains (and fading, if any
// antenna count exceeds 1) are drawn.  Draw order is part of the contract:
// user positions cell by cell, then shadowing user-major, then fading.
inline NetworkInstance gen_from_sites(const NetworkConfig& cfg,
                                      const std::vector<Site>& sites,
                                      const std::vector<Point>& cell_centers,
                                      const std::vector<Point>& shifts) {
  cfg.validate();
  const int num_cells = static_cast<int>(cell_centers.size());
  const int L = static_cast<int>(sites.size());
  const int K = num_cells * cfg.users_per_cell;
  const double inradius = cfg.inter_site_distance_km / 2.0;
  const double bound = cfg.inter_site_distance_km / std::sqrt(3.0);

  Rng rng(cfg.seed);
  NetworkInstance inst;
  inst.num_users = K;
  inst.num_bs = L;
  inst.bandwidth_hz = cfg.bandwidth_hz;
  inst.snr_gap = db_to_linear(cfg.snr_gap_db);
  inst.noise_psd_mw = dbm_to_mw(cfg.noise_psd_dbm_hz);
  inst.seed = cfg.seed;
  inst.max_psd_mw.resize(L);
  for (int j = 0; j < L; ++j) {
    inst.tier.push_back(sites[j].tier);
    inst.cell_of_bs.push_back(sites[j].cell);
    inst.bs_pos.push_back(sites[j].pos);
    inst.bs_antennas.push_back(cfg.bs_antennas);
    inst.max_psd_mw(j) = dbm_to_mw(sites[j].tier == BsTier::macro ? cfg.macro_max_psd_dbm_hz
                                                                  : cfg.pico_max_psd_dbm_hz);
  }

  for (int c = 0; c < num_cells; ++c) {
    for (int u = 0; u < cfg.users_per_cell; ++u) {
      Point p;
      while (true) {
        double x = rng.uniform(-bound, bound);
        double y = rng.uniform(-bound, bound);
        if (!detail::in_hexagon(x, y, inradius)) continue;
        p = {cell_centers[c].x + x, cell_centers[c].y + y};
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& s : sites)
          dmin = std::min(dmin, detail::wrapped_dist(p, s.pos, shifts));
        if (dmin >= cfg.min_user_bs_distance_km) break;
      }
      inst.user_pos.push_back(p);
      inst.cell_of_user.push_back(c);
      inst.user_antennas.push_back(cfg.user_antennas);
    }
  }

  inst.gain.resize(K, L);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < L; ++j) {
      double d = detail::wrapped_dist(inst.user_pos[i], sites[j].pos, shifts);
      double shadow_db = cfg.shadowing_sigma_db * rng.normal();
      double g_db = cfg.antenna_gain_dbi - pathloss_db(d) - shadow_db;
      inst.gain(i, j) = db_to_linear(g_db);
    }
  }

  if (cfg.bs_antennas > 1 || cfg.user_antennas > 1) {
    inst.mimo_channels.reserve(static_cast<std::size_t>(K) * L);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < L; ++j)
        inst.mimo_channels.push_back(
            draw_rayleigh_channel(rng, inst.gain(i, j), cfg.user_antennas, cfg.bs_antennas));
  }
  return inst;
}

// Hex cluster drop: center cell plus up to six neighbors at the inter-site
// distance, one macro per cell at its center, picos at 2/3 of the circum-
// radius toward alternating vertices.  BS order is cell-major, macro first.
inline NetworkInstance gen_topology(const NetworkConfig& cfg) {
  cfg.validate();
  const double isd = cfg.inter_site_distance_km;
  std::vector<Point> centers{{0.0, 0.0}};
  for (int k = 0; k < 6 && static_cast<int>(centers.size()) < cfg.num_cells; ++k) {
    double a = k * M_PI / 3.0;
    centers.push_back({isd * std::cos(a), isd * std::sin(a)});
  }

  const double pico_radius = (2.0 / 3.0) * isd / std::sqrt(3.0);
  std::vector<Site> sites;
  for (int c = 0; c < cfg.num_cells; ++c) {
    sites.push_back({centers[c], BsTier::macro, c});
    for (int q = 0; q < cfg.picos_per_cell; ++q) {
      double a = M_PI / 6.0 + q * 2.0 * M_PI / 3.0;  // 30, 150, 270 degrees
      sites.push_back({{centers[c].x + pico_radius * std::cos(a),
                        centers[c].y + pico_radius * std::sin(a)},
                       BsTier::pico,
                       c});
    }
  }

  std::vector<Point> shifts{{0.0, 0.0}};
  if (cfg.wraparound) shifts = detail::cluster_shifts(isd);
  return gen_from_sites(cfg, sites, centers, shifts);
}

// Compact three-cell cluster: macros on a triangle with side equal to the
// inter-site distance and four picos split 2/1/1 over the cells.  No wrap.
// num_cells/picos_per_cell/wraparound in the config are ignored here; radio
// parameters, user count per cell, antennas, and the seed apply as usual.
inline NetworkInstance gen_compact_cluster(NetworkConfig cfg) {
  cfg.num_cells = 3;
  cfg.picos_per_cell = 1;
  cfg.wraparound = false;
  cfg.validate();
  const double isd = cfg.inter_site_distance_km;
  const double s3 = std::sqrt(3.0);
  std::vector<Point> centers{{0.0, 0.0}, {isd, 0.0}, {isd / 2.0, isd * s3 / 2.0}};
  const double pr = (2.0 / 3.0) * isd / s3;
  auto off = [&](int c, double deg) {
    double a = deg * M_PI / 180.0;
    return Point{centers[c].x + pr * std::cos(a), centers[c].y + pr * std::sin(a)};
  };
  std::vector<Site> sites{{centers[0], BsTier::macro, 0}, {off(0, 30), BsTier::pico, 0},
                          {off(0, 270), BsTier::pico, 0}, {centers[1], BsTier::macro, 1},
                          {off(1, 150), BsTier::pico, 1}, {centers[2], BsTier::macro, 2},
                          {off(2, 270), BsTier::pico, 2}};
  return gen_from_sites(cfg, sites, centers, {{0.0, 0.0}});
}

// SINR of user i from BS j under PSD vector p (mW/Hz), all other BSs
// interfering.  The row sum runs in BS index order; utility_matrix uses the
// same order so both evaluations agree bit for bit.
inline double sinr(const NetworkInstance& inst, int i, int j, const Eigen::VectorXd& p) {
  double total = 0.0;
  for (int l = 0; l < inst.num_bs; ++l) total += inst.gain(i, l) * p(l);
  double own = inst.gain(i, j) * p(j);
  double denom = std::max(total - own, 0.0) + inst.noise_psd_mw;
  return own / denom;
}

// Shared-spectrum rate of user i at BS j carrying k users, bits/s.
inline double rate_siso(const NetworkInstance& inst, int i, int j, const Eigen::VectorXd& p,
                        int k) {
  return inst.bandwidth_hz / k * std::log2(1.0 + sinr(inst, i, j, p) / inst.snr_gap);
}

// Log single-user rates in Mbps: a(i,j) = ln(W * log2(1 + SINR/Gap) / 1e6).
// A BS at zero PSD yields -inf entries, which downstream solvers treat as
// "never attach".  antenna_scaled multiplies the bandwidth by the serving
// BS's antenna count (spatial-multiplexing surrogate for the MIMO stage).
inline Eigen::MatrixXd utility_matrix(const NetworkInstance& inst, const Eigen::VectorXd& p,
                                      bool antenna_scaled = false) {
  Eigen::MatrixXd a(inst.num_users, inst.num_bs);
  for (int i = 0; i < inst.num_users; ++i) {
    double total = 0.0;
    for (int l = 0; l < inst.num_bs; ++l) total += inst.gain(i, l) * p(l);
    for (int j = 0; j < inst.num_bs; ++j) {
      double own = inst.gain(i, j) * p(j);
      double denom = std::max(total - own, 0.0) + inst.noise_psd_mw;
      double w = inst.bandwidth_hz * (antenna_scaled ? inst.bs_antennas[j] : 1);
      a(i, j) = std::log(w * std::log2(1.0 + own / denom / inst.snr_gap) / 1e6);
    }
  }
  return a;
}

// Sum of log-rates, the quantity every solver here maximizes.  Equals
// sum_i a(i, b(i)) - sum_j k_j ln k_j for a = utility_matrix(inst, p).
inline double network_utility(const NetworkInstance& inst, const Association& assoc,
                              const Eigen::VectorXd& p) {
  double u = 0.0;
  for (int i = 0; i < inst.num_users; ++i) {
    int j = assoc.bs_of[i];
    u += std::log(rate_siso(inst, i, j, p, assoc.load[j]) / 1e6);
  }
  return u;
}

// Same objective in the log-rate-matrix domain; used where no instance
// exists (synthetic matrices, oracles).
inline double association_utility(const Eigen::MatrixXd& a, const Association& assoc) {
  double u = 0.0;
  for (int i = 0; i < static_cast<int>(assoc.bs_of.size()); ++i) u += a(i, assoc.bs_of[i]);
  for (int k : assoc.load) u -= xlogx(static_cast<double>(k));
  return u;
}

struct RateReport {
  std::vector<double> rate_bps;  // per user
  double utility = 0.0;          // sum of ln(rate in Mbps)
  std::vector<int> load;         // per BS
  double pico_user_fraction = 0.0;
  std::vector<double> cdf_points;  // rate_bps sorted ascending
};

inline RateReport make_rate_report(const NetworkInstance& inst, const Association& assoc,
                                   const Eigen::VectorXd& p) {
  RateReport r;
  r.load = assoc.load;
  int on_pico = 0;
  for (int i = 0; i < inst.num_users; ++i) {
    int j = assoc.bs_of[i];
    double rate = rate_siso(inst, i, j, p, assoc.load[j]);
    r.rate_bps.push_back(rate);
    r.utility += std::log(rate / 1e6);
    if (inst.tier[j] == BsTier::pico) on_pico++;
  }
  r.pico_user_fraction = static_cast<double>(on_pico) / inst.num_users;
  r.cdf_points = r.rate_bps;
  std::sort(r.cdf_points.begin(), r.cdf_points.end());
  return r;
}

}  // namespace hetnet
