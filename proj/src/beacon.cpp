#include "uvnet/beacon.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

namespace uvnet::beacon {

BeaconSequence generate_msequence(int degree, std::uint32_t taps, std::size_t length) {
  if (degree < 2 || degree > 16) throw ConfigError("LFSR degree must be in [2, 16]");
  const std::uint32_t full = (1u << degree) - 1u;
  if ((taps & ~full) != 0 || (taps & (1u << (degree - 1))) == 0) {
    throw ConfigError("tap mask does not describe a degree-" + std::to_string(degree) + " polynomial");
  }
  const std::size_t period = full;
  if (length < period) throw ConfigError("beacon length shorter than the m-sequence period");

  // Fibonacci form: a[t+n] = a[t] + sum over taps k<n of a[t+k] (mod 2).
  // State bit i holds a[t+i]; the output is a[t].
  const std::uint32_t feedback = (taps & (full >> 1)) << 1 | 1u;
  const std::uint32_t start = full;
  std::uint32_t state = start;
  std::vector<std::uint8_t> bits;
  bits.reserve(length);
  for (std::size_t t = 0; t < period; ++t) {
    bits.push_back(static_cast<std::uint8_t>(state & 1u));
    const std::uint32_t next = std::popcount(state & feedback) & 1u;
    state = (state >> 1) | (next << (degree - 1));
    if (state == start && t + 1 < period) {
      throw ConfigError("taps are not primitive: period " + std::to_string(t + 1) + " < " +
                        std::to_string(period));
    }
  }
  if (state != start) throw ConfigError("taps are not primitive: state did not return");

  BeaconSequence seq;
  seq.degree = degree;
  seq.taps = taps;
  seq.pad_policy = length > period ? PadPolicy::Cyclic : PadPolicy::None;
  for (std::size_t i = period; i < length; ++i) bits.push_back(bits[i % period]);
  seq.bits = std::move(bits);
  return seq;
}

std::vector<int> bipolar(const BeaconSequence& seq) {
  std::vector<int> s(seq.bits.size());
  std::transform(seq.bits.begin(), seq.bits.end(), s.begin(), [](std::uint8_t b) { return b ? 1 : -1; });
  return s;
}

namespace {

// Symbol sums starting at every chip offset: sums[o] = c[o] + ... + c[o+M-1].
std::vector<std::int64_t> boxcar(std::span<const std::int64_t> chips, int m) {
  const std::size_t width = static_cast<std::size_t>(m);
  std::vector<std::int64_t> out(chips.size() - width + 1);
  std::int64_t acc = std::accumulate(chips.begin(), chips.begin() + m, std::int64_t{0});
  out[0] = acc;
  for (std::size_t o = 1; o < out.size(); ++o) {
    acc += chips[o + width - 1] - chips[o - 1];
    out[o] = acc;
  }
  return out;
}

}  // namespace

CorrelationProfile correlate_counts(std::span<const std::int64_t> chip_counts,
                                    const BeaconSequence& templ, int chips_per_symbol) {
  if (chips_per_symbol < 1) throw std::invalid_argument("chips per symbol must be >= 1");
  const std::size_t m = static_cast<std::size_t>(chips_per_symbol);
  const std::size_t span = templ.size() * m;
  if (templ.size() == 0 || chip_counts.size() < span + m - 1) {
    throw InsufficientData("chip window shorter than one beacon plus one symbol");
  }
  const auto sums = boxcar(chip_counts, chips_per_symbol);
  const auto s = bipolar(templ);
  const std::size_t n_offsets = chip_counts.size() - span + 1;

  CorrelationProfile prof;
  prof.values.resize(n_offsets);
  for (std::size_t o = 0; o < n_offsets; ++o) {
    std::int64_t acc = 0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += s[k] * sums[o + k * m];
    prof.values[o] = acc;
  }
  const auto it = std::max_element(prof.values.begin(), prof.values.end());
  prof.peak_index = static_cast<std::size_t>(it - prof.values.begin());
  prof.peak_value = *it;
  return prof;
}

std::optional<std::size_t> detect_beacon(std::span<const std::int64_t> chip_counts,
                                         const BeaconSequence& templ, int chips_per_symbol,
                                         double threshold_ratio) {
  if (!(threshold_ratio > 0.0)) throw std::invalid_argument("threshold ratio must be positive");
  const auto prof = correlate_counts(chip_counts, templ, chips_per_symbol);
  if (prof.peak_value <= 0) return std::nullopt;

  const std::size_t m = static_cast<std::size_t>(chips_per_symbol);
  const std::size_t l = templ.size();
  std::vector<std::int64_t> sym(l);
  for (std::size_t k = 0; k < l; ++k) {
    const auto first = chip_counts.begin() + static_cast<std::ptrdiff_t>(prof.peak_index + k * m);
    sym[k] = std::accumulate(first, first + chips_per_symbol, std::int64_t{0});
  }
  std::sort(sym.begin(), sym.end());
  const std::size_t half = l / 2;
  const double low = std::accumulate(sym.begin(), sym.begin() + half, 0.0) / half;
  const double high = std::accumulate(sym.begin() + half, sym.end(), 0.0) / (l - half);
  const double threshold = threshold_ratio * 0.5 * static_cast<double>(l) * (high - low);
  if (static_cast<double>(prof.peak_value) < threshold) return std::nullopt;
  return prof.peak_index;
}

}  // namespace uvnet::beacon
