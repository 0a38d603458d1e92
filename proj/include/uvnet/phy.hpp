#pragma once

// Discrete-time Poisson photon-counting channel with OOK signalling.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "uvnet/rng.hpp"

namespace uvnet::phy {

/// Means below this are treated as exactly zero.
inline constexpr double kLambdaFloor = 1e-12;

class DegenerateChannel : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mean photoelectron counts per symbol duration.
struct PoissonMeans {
  double lambda_s = 0.0;  ///< signal component
  double lambda_b = 0.0;  ///< background component

  /// Throws std::domain_error unless both means are finite and nonnegative.
  void validate() const;
  /// Copy with sub-floor values snapped to 0.
  PoissonMeans snapped() const;
};

/// Chip subdivision of a symbol. T_c is derived and never stored.
class ChipConfig {
 public:
  ChipConfig(int chips_per_symbol, double symbol_duration_s);

  int chips_per_symbol() const { return chips_; }
  double symbol_duration() const { return symbol_s_; }
  double chip_duration() const { return symbol_s_ / chips_; }

 private:
  int chips_;
  double symbol_s_;
};

/// Directed link. The dst node's receiver scales lambda_s by gain.
struct ChannelLink {
  int src = 0;
  int dst = 0;
  PoissonMeans means;
  double gain = 1.0;
  double distance_m = 1.0;

  void validate() const;
  PoissonMeans effective() const { return {gain * means.lambda_s, means.lambda_b}; }
};

double poisson_pmf(std::int64_t n, double mean);
/// P(N <= n) for N ~ Poisson(mean).
double poisson_cdf(std::int64_t n, double mean);

/// Inversion by sequential search below mean 30, PTRS rejection above.
std::int64_t sample_poisson(double mean, Rng& rng);

std::int64_t sample_symbol_count(int bit, const PoissonMeans& means, Rng& rng);

/// Chip counts from one symbol-level draw, split uniformly across chips.
std::vector<std::int64_t> sample_chip_counts(int bit, const PoissonMeans& means,
                                             const ChipConfig& chips, Rng& rng);

/// Smallest count decided as a 1. Zero-background channels give 1.
std::int64_t ml_threshold(const PoissonMeans& means);

int ml_detect_symbol(std::int64_t count, const PoissonMeans& means);

/// Analytic symbol error probability of the ML detector with equiprobable bits.
double ook_error_probability(const PoissonMeans& means);

}  // namespace uvnet::phy
