#pragma once

// m-sequence beacon generation and counting-based correlation detection.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace uvnet::beacon {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tap mask convention: bit (k-1) set for each term x^k, k = 1..degree. The
/// x^degree bit must be set; the constant term is implicit.
/// x^8+x^6+x^5+x^4+1.
inline constexpr std::uint32_t kDefaultTaps8 = 0xB8;

enum class PadPolicy { None, Cyclic };

struct BeaconSequence {
  std::vector<std::uint8_t> bits;
  int degree = 0;
  std::uint32_t taps = 0;
  PadPolicy pad_policy = PadPolicy::None;

  std::size_t size() const { return bits.size(); }
  std::size_t period() const { return (std::size_t{1} << degree) - 1; }
};

/// One full LFSR period, padded cyclically to `length` bits.
BeaconSequence generate_msequence(int degree, std::uint32_t taps, std::size_t length);

/// +1/-1 mapping of the template.
std::vector<int> bipolar(const BeaconSequence& seq);

struct CorrelationProfile {
  std::vector<std::int64_t> values;
  std::size_t peak_index = 0;
  std::int64_t peak_value = 0;
};

/// Score for each candidate chip offset o:
///   sum_k s_k * (c[o + kM] + ... + c[o + kM + M - 1])
/// i.e. the template sampled once per symbol against symbol-integrated
/// chip counts starting at o. Requires at least L*M + M - 1 chips.
CorrelationProfile correlate_counts(std::span<const std::int64_t> chip_counts,
                                    const BeaconSequence& templ, int chips_per_symbol);

/// Detection test on a window. Returns the peak chip offset when
///   peak > 0 and peak >= ratio * (L/2) * (high - low),
/// where high/low are the mean symbol-integrated counts of the brighter and
/// dimmer halves of the symbols at the peak alignment.
std::optional<std::size_t> detect_beacon(std::span<const std::int64_t> chip_counts,
                                         const BeaconSequence& templ, int chips_per_symbol,
                                         double threshold_ratio);

}  // namespace uvnet::beacon
