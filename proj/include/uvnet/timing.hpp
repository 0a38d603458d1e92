#pragma once

// Delay decomposition, time counters, compensation and sync error.

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <stdexcept>
#include <vector>

#include "uvnet/rng.hpp"

namespace uvnet::timing {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Counter clock. Periods are an exact integer number of ticks.
struct ClockConfig {
  std::int64_t tick_ps = 10'000;  ///< t_clock in picoseconds
  std::int64_t ticks_per_period = 100'000'000;

  static ClockConfig from_period(std::int64_t tick_ps, std::int64_t period_ps);
  double t_clock() const { return static_cast<double>(tick_ps) * 1e-12; }
  double period() const { return t_clock() * static_cast<double>(ticks_per_period); }
};

/// Free-running counter in [0, C_max).
class TimeCounter {
 public:
  explicit TimeCounter(std::int64_t c_max, std::int64_t value = 0);

  std::int64_t value() const { return value_; }
  std::int64_t c_max() const { return c_max_; }
  /// Advances one tick; returns true on wrap to 0.
  bool tick();
  /// Beacon-decode reload.
  void reload(std::int64_t value);

 private:
  std::int64_t c_max_;
  std::int64_t value_;
};

enum class DelayFamily { Constant, Uniform, TruncatedNormal };

/// Processing-delay distribution. For TruncatedNormal, `mean` is the mean of
/// the truncated distribution itself and `sd` the scale of the parent normal;
/// the parent location is solved for at construction.
class DelayDistribution {
 public:
  static DelayDistribution constant(double value);
  static DelayDistribution uniform(double lo, double hi);
  static DelayDistribution truncated_normal(double mean, double sd, double lo, double hi);

  DelayFamily family() const { return family_; }
  double mean() const { return mean_; }
  double sd() const { return sd_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double parent_mean() const { return parent_mean_; }
  /// Standard deviation of the (possibly truncated) distribution.
  double stddev() const;

  double sample(Rng& rng) const;

 private:
  DelayFamily family_ = DelayFamily::Constant;
  double mean_ = 0.0, sd_ = 0.0, lo_ = 0.0, hi_ = 0.0, parent_mean_ = 0.0;
};

DelayFamily parse_family(std::string_view name);

/// Pairwise delays of one network, node ids 1..N mapped to indices 0..N-1.
struct DelayModel {
  double t_trans = 0.0;
  std::vector<std::vector<double>> t_pro;
  DelayDistribution t_ps = DelayDistribution::constant(0.0);
  double t_ps_tilde = 0.0;

  /// Propagation matrix from 2-D positions in meters.
  static std::vector<std::vector<double>> propagation_matrix(
      std::span<const std::pair<double, double>> positions_m);

  std::size_t nodes() const { return t_pro.size(); }
  /// max_j t_pro^{1j}
  double max_master_propagation() const;
  /// Index of the slave farthest from the master.
  std::size_t farthest_slave() const;
};

double compute_t_trans(std::int64_t beacon_bits, double symbol_duration_s);
double compute_t_pro(double distance_m);

struct CounterInit {
  std::int64_t ticks = 0;
  double residual_s = 0.0;  ///< exact value minus ticks * t_clock
};

CounterInit compute_c_initial(double t_trans, std::span<const double> t_pro_row,
                              double t_ps_tilde, double t_clock);

/// Residual error of node `node` (1-based, master = 1) after compensation,
/// positive when the slave counter runs ahead of the master.
double sync_error(int node, double t_ps_sample, const DelayModel& delays);

double sample_processing_delay(const DelayModel& model, Rng& rng);

// Standard normal helpers.
double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

}  // namespace uvnet::timing
