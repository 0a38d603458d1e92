#include "uvnet/phy.hpp"

#include <cmath>
#include <limits>

namespace uvnet::phy {

namespace {

double snap(double x) { return x < kLambdaFloor ? 0.0 : x; }

std::int64_t poisson_inversion(double mean, Rng& rng) {
  const double u = rng.uniform();
  double p = std::exp(-mean);
  double cdf = p;
  std::int64_t k = 0;
  // The tail past k = 1000 is far below double resolution for mean < 30.
  while (u > cdf && k < 1000) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

// Hoermann's transformed rejection with squeeze.
std::int64_t poisson_ptrs(double mean, Rng& rng) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + static_cast<double>(k) * loglam - std::lgamma(static_cast<double>(k) + 1.0)) {
      return k;
    }
  }
}

}  // namespace

void PoissonMeans::validate() const {
  if (!std::isfinite(lambda_s) || !std::isfinite(lambda_b) || lambda_s < 0.0 || lambda_b < 0.0) {
    throw std::domain_error("Poisson means must be finite and nonnegative");
  }
}

PoissonMeans PoissonMeans::snapped() const { return {snap(lambda_s), snap(lambda_b)}; }

ChipConfig::ChipConfig(int chips_per_symbol, double symbol_duration_s)
    : chips_(chips_per_symbol), symbol_s_(symbol_duration_s) {
  if (chips_ < 1) throw std::domain_error("chips per symbol must be >= 1");
  if (!(symbol_s_ > 0.0)) throw std::domain_error("symbol duration must be positive");
}

void ChannelLink::validate() const {
  means.validate();
  if (src == dst) throw std::domain_error("link endpoints must differ");
  if (!(gain >= 0.0)) throw std::domain_error("link gain must be nonnegative");
  if (!(distance_m > 0.0)) throw std::domain_error("link distance must be positive");
}

double poisson_pmf(std::int64_t n, double mean) {
  if (n < 0) throw std::domain_error("poisson_pmf: negative count");
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::domain_error("poisson_pmf: bad mean");
  if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
  // Evaluated in long double; the normalization sum stays within a few ulp of 1.
  const long double m = mean;
  const long double k = static_cast<long double>(n);
  return static_cast<double>(std::exp(k * std::log(m) - m - std::lgamma(k + 1.0L)));
}

double poisson_cdf(std::int64_t n, double mean) {
  if (n < 0) return 0.0;
  double sum = 0.0;
  for (std::int64_t k = 0; k <= n; ++k) sum += poisson_pmf(k, mean);
  return sum > 1.0 ? 1.0 : sum;
}

std::int64_t sample_poisson(double mean, Rng& rng) {
  mean = snap(mean);
  if (mean == 0.0) return 0;
  return mean < 30.0 ? poisson_inversion(mean, rng) : poisson_ptrs(mean, rng);
}

std::int64_t sample_symbol_count(int bit, const PoissonMeans& means, Rng& rng) {
  const PoissonMeans m = means.snapped();
  return sample_poisson((bit ? m.lambda_s : 0.0) + m.lambda_b, rng);
}

std::vector<std::int64_t> sample_chip_counts(int bit, const PoissonMeans& means,
                                             const ChipConfig& chips, Rng& rng) {
  const int n_chips = chips.chips_per_symbol();
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_chips), 0);
  const std::int64_t total = sample_symbol_count(bit, means, rng);
  for (std::int64_t p = 0; p < total; ++p) {
    auto idx = static_cast<std::size_t>(rng.uniform() * n_chips);
    if (idx >= counts.size()) idx = counts.size() - 1;
    ++counts[idx];
  }
  return counts;
}

std::int64_t ml_threshold(const PoissonMeans& means) {
  means.validate();
  const PoissonMeans m = means.snapped();
  if (m.lambda_s == 0.0) throw DegenerateChannel("ml detection needs lambda_s > 0");
  if (m.lambda_b == 0.0) return 1;
  // count * ln(1 + s/b) >= s
  const double slope = std::log1p(m.lambda_s / m.lambda_b);
  auto n = static_cast<std::int64_t>(std::ceil(m.lambda_s / slope));
  // Settle floating-point edge cases against the exact inequality.
  while (n > 0 && static_cast<double>(n - 1) * slope >= m.lambda_s) --n;
  while (static_cast<double>(n) * slope < m.lambda_s) ++n;
  return n;
}

int ml_detect_symbol(std::int64_t count, const PoissonMeans& means) {
  return count >= ml_threshold(means) ? 1 : 0;
}

double ook_error_probability(const PoissonMeans& means) {
  const PoissonMeans m = means.snapped();
  const std::int64_t n_star = ml_threshold(m);
  const double miss = poisson_cdf(n_star - 1, m.lambda_s + m.lambda_b);
  const double false_alarm = m.lambda_b == 0.0 ? 0.0 : 1.0 - poisson_cdf(n_star - 1, m.lambda_b);
  return 0.5 * (miss + false_alarm);
}

}  // namespace uvnet::phy
