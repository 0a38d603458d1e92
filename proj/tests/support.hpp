#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "uvnet/config.hpp"
#include "uvnet/sim.hpp"

namespace testsupport {

inline std::string config_path(const std::string& name) { return std::string(UVNET_SOURCE_DIR) + "/configs/" + name; }

inline uvnet::config::Config load_config(const std::string& name,
                                         const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  auto doc = uvnet::config::parse_document(
      [&] {
        std::ifstream in(config_path(name));
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
      }(),
      name);
  for (const auto& [k, v] : overrides) doc.set(k, v, "test");
  return uvnet::config::build(doc);
}

/// Kolmogorov survival function Q(x) = 2 sum (-1)^(k-1) exp(-2 k^2 x^2).
inline double kolmogorov_q(double x) {
  if (x < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov p-value for integer-valued samples.
inline double ks_two_sample_p(std::vector<std::int64_t> a, std::vector<std::int64_t> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const auto v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::fabs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;
};

template <class It>
MeanVar mean_var(It first, It last) {
  double n = 0, mean = 0, m2 = 0;
  for (; first != last; ++first) {
    const double x = static_cast<double>(*first);
    n += 1;
    const double delta = x - mean;
    mean += delta / n;
    m2 += delta * (x - mean);
  }
  return {mean, n > 1 ? m2 / (n - 1) : 0.0};
}

}  // namespace testsupport
