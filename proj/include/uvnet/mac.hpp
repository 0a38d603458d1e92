#pragma once

// TDMA schedule, master/slave slot-transition state machines, schedule
// admissibility checks and the frame format.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uvnet/timing.hpp"

namespace uvnet::mac {

/// Raised when the incremental machine reaches a state no transition covers.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Slot lengths in symbols. The period is
///   t_bt + t_bi + N(N-1)(t_u + t_g)
/// and is the modulus of every node counter.
struct SlotTable {
  int nodes = 4;
  std::int64_t beacon_tx = 256;
  std::int64_t beacon_interval = 256;
  std::int64_t info = 137'500;
  std::int64_t guard = 29'124;
  std::int64_t ticks_per_symbol = 50;

  void validate() const;
  int info_slots() const { return nodes * (nodes - 1); }
  std::int64_t period_symbols() const;
  std::int64_t period_ticks() const { return period_symbols() * ticks_per_symbol; }
  std::int64_t ticks(std::int64_t symbols) const { return symbols * ticks_per_symbol; }
};

enum class Role { Master, Slave };

struct SlotKind {
  enum class Type { BeaconTx, BeaconInterval, Info, Guard };
  Type type = Type::BeaconTx;
  int i = 0;
  int j = 0;

  static SlotKind beacon_tx() { return {Type::BeaconTx, 0, 0}; }
  static SlotKind beacon_interval() { return {Type::BeaconInterval, 0, 0}; }
  static SlotKind info(int i, int j) { return {Type::Info, i, j}; }
  static SlotKind guard(int i, int j) { return {Type::Guard, i, j}; }

  bool operator==(const SlotKind&) const = default;
  std::string to_string() const;
};

/// Position of U_ij among the N(N-1) info slots.
int ordered_pair_index(int i, int j, int nodes);
/// Inverse of ordered_pair_index.
std::pair<int, int> pair_at_index(int index, int nodes);

/// Closed-form slot lookup for a counter value.
SlotKind slot_at(std::int64_t counter, const SlotTable& table, Role role);

/// Counter value at which `slot` is left, written out per transition
/// equation. For the last guard this equals the period.
std::int64_t transition_counter(const SlotKind& slot, const SlotTable& table);

/// Slot entered when `slot` is left. Leaving the last guard yields BeaconTx
/// for the master and the beacon wait (BeaconInterval) for a slave.
SlotKind successor(const SlotKind& slot, int nodes, Role role);

struct TimelineEntry {
  SlotKind slot;
  std::int64_t start = 0;  ///< counter ticks
  std::int64_t end = 0;
};

/// One period of the given role, built from the transition equations.
std::vector<TimelineEntry> timeline(const SlotTable& table, Role role);

struct NodeState {
  int id = 1;
  Role role = Role::Master;
  timing::TimeCounter counter{1};
  SlotKind current;
  bool synced = true;
  std::int64_t c_initial = 0;
  std::int64_t next_transition = -1;  ///< -1 while waiting for a beacon
};

NodeState make_master(const SlotTable& table);
/// Unsynced slave waiting for its first beacon.
NodeState make_slave(int id, const SlotTable& table, std::int64_t c_initial);

struct StepEvents {
  bool beacon_decoded = false;
};

struct Action {
  enum class Kind { StartBeacon, StopBeacon, StartTx, StopTx, Listen, IgnoredBeacon };
  Kind kind;
  int i = 0;
  int j = 0;
  bool operator==(const Action&) const = default;
};

struct StepResult {
  NodeState state;
  std::vector<Action> actions;
  bool transitioned = false;
};

/// Pure transition function. Advances one tick, or on an accepted beacon
/// decode reloads a slave counter to c_initial inside the beacon interval.
StepResult step_state_machine(const NodeState& state, const SlotTable& table, const StepEvents& events = {});

struct ConstraintCheck {
  std::string name;
  std::string expression;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  ///< positive when satisfied with room to spare
  std::string unit;
  bool ok = false;
};

/// Every admissibility constraint with its margin.
std::vector<ConstraintCheck> check_slot_table(const SlotTable& table, const timing::ClockConfig& clock,
                                              const timing::DelayModel& delays, double td_bound);
/// The failing subset of check_slot_table.
std::vector<ConstraintCheck> validate_slot_table(const SlotTable& table, const timing::ClockConfig& clock,
                                                 const timing::DelayModel& delays, double td_bound);

struct Capacity {
  double raw_aggregate_bps = 0.0;
  double per_node_bps = 0.0;
  bool operator==(const Capacity&) const = default;
};

/// Info-slot capacity at one bit per OOK symbol.
Capacity capacity(const SlotTable& table, double period_s);

struct TxInterval {
  int node = 0;
  int period = 0;
  SlotKind slot;
  std::int64_t start = 0;  ///< absolute ticks, half-open
  std::int64_t end = 0;
};

/// Transmit intervals of every node over `periods` periods. ahead_ticks[n]
/// is how far node n+1's counter runs ahead of the master.
std::vector<TxInterval> transmit_trace(const SlotTable& table, std::span<const std::int64_t> ahead_ticks,
                                       int periods);

std::vector<std::pair<TxInterval, TxInterval>> find_overlaps(std::vector<TxInterval> intervals);

// Frame format: 32-bit sync word, 16-bit sequence number, payload, CRC-16.

/// Barker-13, Barker-11 and Barker-7 back to back, one zero pad bit.
inline constexpr std::uint32_t kSyncWord = 0xF9AF12E4;
inline constexpr std::size_t kSyncBits = 32;
inline constexpr std::size_t kSeqBits = 16;
inline constexpr std::size_t kCrcBits = 16;

constexpr std::size_t frame_length(std::size_t payload_bits) {
  return kSyncBits + kSeqBits + payload_bits + kCrcBits;
}

std::vector<std::uint8_t> build_frame(std::span<const std::uint8_t> payload, std::uint16_t seq_no);

struct ParsedFrame {
  enum class Status { Ok, Truncated, NoSync, BadChecksum };
  Status status = Status::Truncated;
  int sync_distance = 0;  ///< Hamming distance of the received sync word
  std::uint16_t seq_no = 0;
  std::vector<std::uint8_t> payload;
};

ParsedFrame parse_frame(std::span<const std::uint8_t> bits, std::size_t payload_bits);

}  // namespace uvnet::mac
