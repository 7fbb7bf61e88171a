#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace editdiff {

using Rng = std::mt19937_64;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Probabilities below this are treated as exact zeros in log space.
inline constexpr double zero_threshold = 1e-300;

inline double safe_log(double p) { return p < zero_threshold ? neg_inf : std::log(p); }

inline double log_sum_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = neg_inf;
  for (double x : xs) m = x > m ? x : m;
  if (m == neg_inf) return neg_inf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

enum class errc {
  marker_in_data_sequence,
  out_of_range_index,
  projection_mismatch,
  invalid_argument,
  zero_normalizer,
  over_length,
  io,
  divergence,
};

inline const char* to_string(errc c) {
  switch (c) {
    case errc::marker_in_data_sequence: return "marker-in-data-sequence";
    case errc::out_of_range_index: return "out-of-range index";
    case errc::projection_mismatch: return "consumed-projection mismatch";
    case errc::invalid_argument: return "invalid argument";
    case errc::zero_normalizer: return "zero normalizer";
    case errc::over_length: return "over-length input";
    case errc::io: return "i/o error";
    case errc::divergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

// Uniform draws are built from raw engine output so that streams are
// identical across standard library implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t uniform_int(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % n;
}

/// Number of failures before the first success, success probability 1 - stop.
/// Inverse-CDF on one uniform draw.
inline int sample_geometric(double stop, Rng& rng) {
  if (stop <= 0.0) return 0;
  const double u = uniform_open01(rng);
  const double n = std::floor(std::log(u) / std::log(stop));
  return n > 1e9 ? 1000000000 : static_cast<int>(n);
}

/// Draws an index proportional to non-negative weights.
template <typename Weights>
int sample_categorical(const Weights& w, Rng& rng) {
  double total = 0.0;
  const auto n = static_cast<int>(w.size());
  for (int i = 0; i < n; ++i) total += w[i];
  if (!(total > 0.0)) throw Error(errc::zero_normalizer, "categorical with zero total mass");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

/// Derives an independent engine from a base seed and a stream tuple.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

}  // namespace editdiff
