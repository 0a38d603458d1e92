#pragma once

// Deterministic discrete-event engine for an N-node beacon-enabled TDMA
// network: one master (node 1) and N-1 slaves.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uvnet/beacon.hpp"
#include "uvnet/mac.hpp"
#include "uvnet/phy.hpp"
#include "uvnet/timing.hpp"

namespace uvnet::sim {

class ScenarioError : public std::invalid_argument {
 public:
  explicit ScenarioError(const std::string& what, std::vector<mac::ConstraintCheck> violations = {})
      : std::invalid_argument(what), violations_(std::move(violations)) {}
  const std::vector<mac::ConstraintCheck>& violations() const { return violations_; }

 private:
  std::vector<mac::ConstraintCheck> violations_;
};

struct Fault {
  enum class Kind { DropBeacon, Jam, OffsetClock };
  Kind kind = Kind::DropBeacon;
  int period = 0;           ///< DropBeacon: 1-based period
  int node = 0;             ///< Jam, OffsetClock
  std::int64_t start = 0;   ///< Jam: absolute ticks, half-open
  std::int64_t end = 0;
  double intensity = 0.0;   ///< Jam: extra background photons per symbol
  std::int64_t ticks = 0;   ///< OffsetClock: added to c_initial at every reload

  static Fault drop_beacon(int period) { return {Kind::DropBeacon, period}; }
  static Fault jam(int node, std::int64_t start, std::int64_t end, double intensity) {
    return {Kind::Jam, 0, node, start, end, intensity};
  }
  static Fault offset_clock(int node, std::int64_t ticks) { return {Kind::OffsetClock, 0, node, 0, 0, 0.0, ticks}; }

  bool operator==(const Fault&) const = default;
};

/// Parses "drop_beacon:P", "jam:NODE:START:END:INTENSITY", "offset_clock:NODE:TICKS".
Fault parse_fault(const std::string& spec);
std::string to_string(const Fault& fault);

enum class Combining { Facing, Selection };
enum class Estimation { Preamble, Genie };

struct Receiver {
  int id = 1;
  int faces = 0;  ///< peer node the receiver is aimed at, 0 for none
  double gain = 1.0;
};

struct Scenario {
  std::vector<std::pair<double, double>> positions_m;  ///< node k at index k-1
  mac::SlotTable table;
  timing::ClockConfig clock;
  std::int64_t beacon_bits = 256;
  int lfsr_degree = 8;
  std::uint32_t lfsr_taps = beacon::kDefaultTaps8;
  int chips_per_symbol = 10;
  double detect_threshold_ratio = 0.5;

  timing::DelayDistribution processing = timing::DelayDistribution::constant(0.0);
  double t_ps_tilde = 0.0;
  double td_bound = 50e-9;

  phy::PoissonMeans means{10.0, 1.0};
  std::map<std::pair<int, int>, double> link_gain;  ///< (src, dst), default 1

  int receivers_per_node = 3;
  Combining combining = Combining::Facing;
  double off_axis_gain = 0.0;
  std::map<std::pair<int, int>, double> receiver_gain;  ///< (node, receiver id), default 1

  Estimation estimation = Estimation::Preamble;
  int preamble_symbols = 64;
  std::int64_t frames_per_node = 10'000;
  int payload_bits = 1024;
  int max_periods = 0;  ///< 0 picks a bound from the traffic volume
  int sync_trials = 100;
  std::uint64_t seed = 1;
  std::vector<Fault> faults;
  bool trace = false;

  int nodes() const { return static_cast<int>(positions_m.size()); }
  double symbol_duration() const;
  double t_trans() const;
  timing::DelayModel delay_model() const;
  std::int64_t c_initial_ticks() const;
  double gain(int src, int dst) const;
  std::vector<Receiver> receivers(int node) const;
  /// Receiver used to decode `src` at `node`, with its effective gain.
  std::pair<Receiver, double> select_receiver(int node, int src) const;
  int frames_per_slot() const;
  int effective_max_periods() const;

  /// Structural checks; throws ScenarioError.
  void check_structure() const;
  std::vector<mac::ConstraintCheck> constraints() const;
  std::vector<mac::ConstraintCheck> violations() const;
};

Scenario inject_fault(const Scenario& scenario, const Fault& fault);

struct PairCounters {
  std::int64_t transmitted = 0;
  std::int64_t received = 0;  ///< frame sync word found
  std::int64_t correct = 0;   ///< checksum verified
  std::int64_t lost = 0;      ///< demodulated, sync word not found
  std::int64_t dropped_unsynced = 0;
  std::int64_t bits_demodulated = 0;
  std::int64_t bit_errors = 0;

  bool operator==(const PairCounters&) const = default;
};

struct SyncSample {
  int period = 0;  ///< period or trial number, 1-based
  int node = 0;
  double pre_s = 0.0;   ///< beacon start to sync pulse
  double post_s = 0.0;  ///< slave counter minus master counter, in seconds

  bool operator==(const SyncSample&) const = default;
};

struct TraceEvent {
  std::int64_t time = 0;
  int node = 0;
  std::string kind;
  std::string detail;

  bool operator==(const TraceEvent&) const = default;
};

struct RunMetrics {
  int nodes = 0;
  int periods_run = 0;
  double simulated_s = 0.0;
  std::vector<std::vector<PairCounters>> pairs;  ///< [src-1][dst-1]
  std::vector<SyncSample> sync;
  std::int64_t overlap_events = 0;
  std::int64_t beacons_sent = 0;
  std::int64_t beacons_detected = 0;
  std::int64_t beacons_missed = 0;
  std::int64_t beacons_ignored = 0;
  std::int64_t beacon_offset_errors = 0;  ///< detections off the true chip
  std::int64_t beacon_false_alarms = 0;   ///< detections in a period whose beacon was dropped
  std::vector<std::int64_t> delivered_per_period;
  mac::Capacity capacity;
  std::vector<TraceEvent> trace;

  std::int64_t frame_receive_num(int node) const;
  std::int64_t frame_correct_num(int node) const;
  std::int64_t frames_addressed(int node) const;
  std::int64_t frames_transmitted_total() const;
  double link_ber(int src, int dst) const;
  /// Payload BER toward `node` over every bit it was offered, with bits that
  /// were never demodulated counted as coin flips.
  double effective_ber(int node, std::int64_t frames_per_pair, int payload_bits) const;
  double goodput_bps(int node, int payload_bits) const;

  bool operator==(const RunMetrics&) const = default;
};

/// Runs whole periods until every ordered pair has sent frames_per_node
/// frames or the period bound is hit. Throws ScenarioError on an
/// inadmissible schedule unless `force`.
RunMetrics run(const Scenario& scenario, bool force = false);

/// Analytic sync rounds: per trial and slave, one processing-delay draw.
std::vector<SyncSample> run_sync_trial(const Scenario& scenario, int trials);

}  // namespace uvnet::sim
