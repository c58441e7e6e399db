#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetnet {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// dBm/Hz <-> mW/Hz.  All internal powers are mW/Hz; dB forms exist only at
// the config boundary.
inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

// Deterministic RNG.  mt19937_64's bit stream is pinned by the standard;
// the distributions below are hand-rolled because std::*_distribution is
// implementation-defined and would break byte-identical instance generation
// across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // N(0, 1) via Box-Muller; the spare is cached, so call order matters for
  // reproducibility (which is the point).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // CN(0, 1): unit-variance circularly symmetric complex Gaussian.
  std::complex<double> cnormal() {
    double re = normal();
    double im = normal();
    return {re * M_SQRT1_2, im * M_SQRT1_2};
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Percentile with linear interpolation between order statistics
// (q in [0,100]; x need not be sorted).
inline double percentile(std::vector<double> x, double q) {
  if (x.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(x.begin(), x.end());
  if (x.size() == 1) return x[0];
  double pos = q / 100.0 * static_cast<double>(x.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return x[lo] + frac * (x[hi] - x[lo]);
}

// x ln x with the 0 ln 0 := 0 convention used by the load penalty.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace hetnet
