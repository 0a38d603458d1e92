#include "uvnet/timing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace uvnet::timing {

ClockConfig ClockConfig::from_period(std::int64_t tick_ps, std::int64_t period_ps) {
  if (tick_ps <= 0) throw ConfigError("t_clock must be positive");
  if (period_ps <= 0 || period_ps % tick_ps != 0) {
    throw ConfigError("period must be a positive integer multiple of t_clock");
  }
  return {tick_ps, period_ps / tick_ps};
}

TimeCounter::TimeCounter(std::int64_t c_max, std::int64_t value) : c_max_(c_max), value_(value) {
  if (c_max_ <= 0) throw std::domain_error("C_max must be positive");
  if (value_ < 0 || value_ >= c_max_) throw std::domain_error("counter value out of range");
}

bool TimeCounter::tick() {
  if (++value_ == c_max_) {
    value_ = 0;
    return true;
  }
  return false;
}

void TimeCounter::reload(std::int64_t value) {
  if (value < 0 || value >= c_max_) throw std::domain_error("reload value out of range");
  value_ = value;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Acklam's rational approximation, polished with one Halley step.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

namespace {

struct TruncMoments {
  double mean;
  double var;
};

TruncMoments truncated_moments(double mu, double sd, double lo, double hi) {
  const double a = (lo - mu) / sd;
  const double b = (hi - mu) / sd;
  const double z = normal_cdf(b) - normal_cdf(a);
  if (!(z > 1e-300)) return {std::clamp(mu, lo, hi), 0.0};
  const double pa = std::isfinite(a) ? normal_pdf(a) : 0.0;
  const double pb = std::isfinite(b) ? normal_pdf(b) : 0.0;
  const double aa = std::isfinite(a) ? a * pa : 0.0;
  const double bb = std::isfinite(b) ? b * pb : 0.0;
  const double r = (pa - pb) / z;
  return {mu + sd * r, sd * sd * (1.0 + (aa - bb) / z - r * r)};
}

}  // namespace

DelayDistribution DelayDistribution::constant(double value) {
  if (!(value >= 0.0)) throw ConfigError("processing delay must be nonnegative");
  DelayDistribution d;
  d.family_ = DelayFamily::Constant;
  d.mean_ = d.lo_ = d.hi_ = d.parent_mean_ = value;
  return d;
}

DelayDistribution DelayDistribution::uniform(double lo, double hi) {
  if (!(lo >= 0.0 && hi >= lo)) throw ConfigError("uniform delay needs 0 <= lo <= hi");
  DelayDistribution d;
  d.family_ = DelayFamily::Uniform;
  d.lo_ = lo;
  d.hi_ = hi;
  d.mean_ = d.parent_mean_ = 0.5 * (lo + hi);
  d.sd_ = (hi - lo) / std::sqrt(12.0);
  return d;
}

DelayDistribution DelayDistribution::truncated_normal(double mean, double sd, double lo, double hi) {
  if (!(sd > 0.0)) throw ConfigError("truncated normal needs sd > 0");
  if (!(lo >= 0.0 && lo < mean && mean < hi)) {
    throw ConfigError("truncated normal needs 0 <= lo < mean < hi");
  }
  DelayDistribution d;
  d.family_ = DelayFamily::TruncatedNormal;
  d.mean_ = mean;
  d.sd_ = sd;
  d.lo_ = lo;
  d.hi_ = hi;
  // The truncated mean is increasing in the parent location.
  double left = mean - 40.0 * sd;
  double right = mean + 40.0 * sd;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + right);
    (truncated_moments(mid, sd, lo, hi).mean < mean ? left : right) = mid;
  }
  d.parent_mean_ = 0.5 * (left + right);
  const double err = std::fabs(truncated_moments(d.parent_mean_, sd, lo, hi).mean - mean);
  if (err > 1e-6 * std::max(sd, std::fabs(mean))) {
    throw ConfigError("truncated normal: mean not attainable with this sd and bounds");
  }
  return d;
}

double DelayDistribution::stddev() const {
  switch (family_) {
    case DelayFamily::Constant:
      return 0.0;
    case DelayFamily::Uniform:
      return sd_;
    case DelayFamily::TruncatedNormal:
      return std::sqrt(std::max(0.0, truncated_moments(parent_mean_, sd_, lo_, hi_).var));
  }
  return 0.0;
}

double DelayDistribution::sample(Rng& rng) const {
  switch (family_) {
    case DelayFamily::Constant:
      return mean_;
    case DelayFamily::Uniform:
      return lo_ + (hi_ - lo_) * rng.uniform();
    case DelayFamily::TruncatedNormal: {
      // Inverse CDF restricted to [Phi(a), Phi(b)].
      const double fa = normal_cdf((lo_ - parent_mean_) / sd_);
      const double fb = normal_cdf((hi_ - parent_mean_) / sd_);
      double p = fa + (fb - fa) * rng.uniform_open();
      p = std::clamp(p, 1e-300, std::nextafter(1.0, 0.0));
      return std::clamp(parent_mean_ + sd_ * normal_quantile(p), lo_, hi_);
    }
  }
  return mean_;
}

DelayFamily parse_family(std::string_view name) {
  if (name == "constant") return DelayFamily::Constant;
  if (name == "uniform") return DelayFamily::Uniform;
  if (name == "truncated_normal") return DelayFamily::TruncatedNormal;
  throw ConfigError("unsupported processing-delay family '" + std::string(name) + "'");
}

std::vector<std::vector<double>> DelayModel::propagation_matrix(
    std::span<const std::pair<double, double>> positions_m) {
  const std::size_t n = positions_m.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = positions_m[i].first - positions_m[j].first;
      const double dy = positions_m[i].second - positions_m[j].second;
      m[i][j] = m[j][i] = compute_t_pro(std::hypot(dx, dy));
    }
  }
  return m;
}

double DelayModel::max_master_propagation() const {
  if (t_pro.empty()) return 0.0;
  return *std::max_element(t_pro[0].begin(), t_pro[0].end());
}

std::size_t DelayModel::farthest_slave() const {
  if (t_pro.size() < 2) throw std::domain_error("no slaves");
  return static_cast<std::size_t>(std::max_element(t_pro[0].begin() + 1, t_pro[0].end()) - t_pro[0].begin());
}

double compute_t_trans(std::int64_t beacon_bits, double symbol_duration_s) {
  if (beacon_bits < 1 || !(symbol_duration_s > 0.0)) throw std::domain_error("compute_t_trans: bad input");
  return static_cast<double>(beacon_bits) * symbol_duration_s;
}

double compute_t_pro(double distance_m) {
  if (!(distance_m > 0.0)) throw std::domain_error("compute_t_pro: distance must be positive");
  return distance_m / kSpeedOfLight;
}

CounterInit compute_c_initial(double t_trans, std::span<const double> t_pro_row, double t_ps_tilde,
                              double t_clock) {
  if (!(t_clock > 0.0)) throw std::domain_error("t_clock must be positive");
  const double max_pro = t_pro_row.empty() ? 0.0 : *std::max_element(t_pro_row.begin(), t_pro_row.end());
  const double total = t_trans + max_pro + t_ps_tilde;
  const auto ticks = static_cast<std::int64_t>(std::llround(total / t_clock));
  return {ticks, total - static_cast<double>(ticks) * t_clock};
}

double sync_error(int node, double t_ps_sample, const DelayModel& delays) {
  if (node == 1) return 0.0;
  const auto i = static_cast<std::size_t>(node - 1);
  if (node < 1 || i >= delays.nodes()) throw std::domain_error("sync_error: node out of range");
  return (delays.t_ps_tilde - t_ps_sample) + (delays.max_master_propagation() - delays.t_pro[0][i]);
}

double sample_processing_delay(const DelayModel& model, Rng& rng) { return model.t_ps.sample(rng); }

}  // namespace uvnet::timing
