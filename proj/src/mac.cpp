#include "uvnet/mac.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <boost/crc.hpp>

namespace uvnet::mac {

void SlotTable::validate() const {
  if (nodes < 2) throw std::domain_error("slot table needs at least 2 nodes");
  if (beacon_tx <= 0 || beacon_interval <= 0 || info <= 0 || guard < 0) {
    throw std::domain_error("slot lengths must be positive (guard nonnegative)");
  }
  if (ticks_per_symbol <= 0) throw std::domain_error("ticks per symbol must be positive");
}

std::int64_t SlotTable::period_symbols() const {
  return beacon_tx + beacon_interval + static_cast<std::int64_t>(info_slots()) * (info + guard);
}

std::string SlotKind::to_string() const {
  switch (type) {
    case Type::BeaconTx:
      return "BT";
    case Type::BeaconInterval:
      return "BI";
    case Type::Info:
      return "U" + std::to_string(i) + "," + std::to_string(j);
    case Type::Guard:
      return "G" + std::to_string(i) + "," + std::to_string(j);
  }
  return "?";
}

int ordered_pair_index(int i, int j, int nodes) {
  if (i == j) throw std::domain_error("ordered_pair_index: i == j");
  if (i < 1 || j < 1 || i > nodes || j > nodes) throw std::domain_error("ordered_pair_index: node out of range");
  return (i - 1) * (nodes - 1) + (j < i ? j - 1 : j - 2);
}

std::pair<int, int> pair_at_index(int index, int nodes) {
  if (index < 0 || index >= nodes * (nodes - 1)) throw std::domain_error("pair_at_index: out of range");
  const int i = index / (nodes - 1) + 1;
  const int r = index % (nodes - 1);
  return {i, r + 1 < i ? r + 1 : r + 2};
}

SlotKind slot_at(std::int64_t counter, const SlotTable& table, Role role) {
  if (counter < 0 || counter >= table.period_ticks()) throw std::domain_error("slot_at: counter out of range");
  if (counter < table.ticks(table.beacon_tx)) {
    return role == Role::Master ? SlotKind::beacon_tx() : SlotKind::beacon_interval();
  }
  const std::int64_t base = table.ticks(table.beacon_tx + table.beacon_interval);
  if (counter < base) return SlotKind::beacon_interval();
  const std::int64_t stride = table.ticks(table.info + table.guard);
  const auto k = static_cast<int>((counter - base) / stride);
  const std::int64_t within = (counter - base) % stride;
  const auto [i, j] = pair_at_index(k, table.nodes);
  return within < table.ticks(table.info) ? SlotKind::info(i, j) : SlotKind::guard(i, j);
}

std::int64_t transition_counter(const SlotKind& slot, const SlotTable& table) {
  const std::int64_t n = table.nodes;
  const std::int64_t base = table.beacon_tx + table.beacon_interval;
  const std::int64_t stride = table.info + table.guard;
  const std::int64_t i = slot.i;
  const std::int64_t j = slot.j;
  std::int64_t symbols = 0;
  switch (slot.type) {
    case SlotKind::Type::BeaconTx:
      symbols = table.beacon_tx;
      break;
    case SlotKind::Type::BeaconInterval:
      symbols = base;
      break;
    case SlotKind::Type::Info:
      symbols = j < i ? base + ((i - 1) * (n - 1) + (j - 1)) * stride + table.info
                      : base + ((i - 1) * (n - 1) + (j - 2)) * stride + table.info;
      break;
    case SlotKind::Type::Guard:
      if (j < i) {
        if (j == i - 1) {
          symbols = i == n ? base + n * (n - 1) * stride : base + n * (i - 1) * stride;
        } else {
          symbols = base + ((i - 1) * (n - 1) + j) * stride;
        }
      } else {
        symbols = j == n ? base + i * (n - 1) * stride : base + ((i - 1) * (n - 1) + (j - 1)) * stride;
      }
      break;
  }
  return table.ticks(symbols);
}

SlotKind successor(const SlotKind& slot, int nodes, Role role) {
  switch (slot.type) {
    case SlotKind::Type::BeaconTx:
      return SlotKind::beacon_interval();
    case SlotKind::Type::BeaconInterval:
      return SlotKind::info(1, 2);
    case SlotKind::Type::Info:
      return SlotKind::guard(slot.i, slot.j);
    case SlotKind::Type::Guard:
      if (slot.i == nodes && slot.j == nodes - 1) {
        return role == Role::Master ? SlotKind::beacon_tx() : SlotKind::beacon_interval();
      }
      if (slot.j == slot.i - 1) return SlotKind::info(slot.i, slot.i + 1);
      if (slot.j == nodes) return SlotKind::info(slot.i + 1, 1);
      return SlotKind::info(slot.i, slot.j + 1);
  }
  throw InvariantViolation("successor: unknown slot");
}

std::vector<TimelineEntry> timeline(const SlotTable& table, Role role) {
  std::vector<TimelineEntry> out;
  SlotKind slot = role == Role::Master ? SlotKind::beacon_tx() : SlotKind::beacon_interval();
  std::int64_t start = 0;
  for (;;) {
    const std::int64_t end = transition_counter(slot, table);
    if (end < start) throw InvariantViolation("timeline: transition counter moved backwards");
    if (end > start) out.push_back({slot, start, end});
    if (end == table.period_ticks()) break;
    if (end > table.period_ticks()) throw InvariantViolation("timeline: transition beyond period");
    slot = successor(slot, table.nodes, role);
    start = end;
  }
  return out;
}

NodeState make_master(const SlotTable& table) {
  NodeState s;
  s.id = 1;
  s.role = Role::Master;
  s.counter = timing::TimeCounter(table.period_ticks(), 0);
  s.current = SlotKind::beacon_tx();
  s.synced = true;
  s.next_transition = transition_counter(s.current, table);
  return s;
}

NodeState make_slave(int id, const SlotTable& table, std::int64_t c_initial) {
  NodeState s;
  s.id = id;
  s.role = Role::Slave;
  s.counter = timing::TimeCounter(table.period_ticks(), 0);
  s.current = SlotKind::beacon_interval();
  s.synced = false;
  s.c_initial = c_initial;
  s.next_transition = -1;
  return s;
}

StepResult step_state_machine(const NodeState& state, const SlotTable& table, const StepEvents& events) {
  StepResult r{state, {}, false};
  NodeState& s = r.state;

  if (s.role == Role::Slave && events.beacon_decoded) {
    if (!s.synced) {
      if (s.c_initial >= transition_counter(SlotKind::beacon_interval(), table)) {
        throw InvariantViolation("c_initial lies beyond the beacon interval");
      }
      s.counter.reload(s.c_initial);
      s.synced = true;
      s.current = SlotKind::beacon_interval();
      s.next_transition = transition_counter(s.current, table);
      r.transitioned = true;
      return r;
    }
    r.actions.push_back({Action::Kind::IgnoredBeacon});
  }

  const std::int64_t next = s.counter.value() + 1;
  const bool wrapped = s.counter.tick();
  if (s.role == Role::Slave && !s.synced) return r;

  if (next != s.next_transition) {
    if (wrapped || next > s.next_transition) {
      throw InvariantViolation("no transition matches counter " + std::to_string(next) + " in " +
                               s.current.to_string());
    }
    return r;
  }

  const SlotKind leaving = s.current;
  const SlotKind entering = successor(leaving, table.nodes, s.role);
  if (leaving.type == SlotKind::Type::BeaconTx) r.actions.push_back({Action::Kind::StopBeacon});
  if (leaving.type == SlotKind::Type::Info && leaving.i == s.id) {
    r.actions.push_back({Action::Kind::StopTx, leaving.i, leaving.j});
  }
  if (entering.type == SlotKind::Type::BeaconTx) r.actions.push_back({Action::Kind::StartBeacon});
  if (entering.type == SlotKind::Type::Info && entering.i == s.id) {
    r.actions.push_back({Action::Kind::StartTx, entering.i, entering.j});
  }
  s.current = entering;
  r.transitioned = true;

  if (s.role == Role::Slave && wrapped) {
    // New period: the schedule is stale until the next beacon decodes.
    s.synced = false;
    s.next_transition = -1;
    r.actions.push_back({Action::Kind::Listen});
  } else {
    s.next_transition = transition_counter(entering, table);
    if (s.next_transition <= s.counter.value() && !(entering.type == SlotKind::Type::BeaconTx)) {
      throw InvariantViolation("transition counter does not advance from " + entering.to_string());
    }
  }
  return r;
}

std::vector<ConstraintCheck> check_slot_table(const SlotTable& table, const timing::ClockConfig& clock,
                                              const timing::DelayModel& delays, double td_bound) {
  table.validate();
  const double t_sym = static_cast<double>(table.ticks_per_symbol) * clock.t_clock();
  const double t_bt = static_cast<double>(table.beacon_tx) * t_sym;
  const double t_bi = static_cast<double>(table.beacon_interval) * t_sym;
  const double t_g = static_cast<double>(table.guard) * t_sym;
  const double budget = delays.max_master_propagation() + delays.t_ps_tilde;
  std::vector<ConstraintCheck> out;

  auto add = [&](std::string name, std::string expr, double lhs, double rhs, double margin, std::string unit,
                 bool ok) { out.push_back({std::move(name), std::move(expr), lhs, rhs, margin, std::move(unit), ok}); };

  const auto period = static_cast<double>(table.period_ticks());
  const auto c_max = static_cast<double>(clock.ticks_per_period);
  add("period_identity", "t_bt + t_bi + N(N-1)(t_u + t_g) == T", period, c_max, -std::fabs(period - c_max),
      "ticks", table.period_ticks() == clock.ticks_per_period);

  add("beacon_tx_length", "t_bt == L * T_s", t_bt, delays.t_trans, -std::fabs(t_bt - delays.t_trans), "s",
      std::fabs(t_bt - delays.t_trans) < 0.5 * clock.t_clock());

  add("beacon_interval", "t_bi >= max_j t_pro(1,j) + t_ps_tilde", t_bi, budget, t_bi - budget, "s",
      t_bi >= budget);

  const double slack = std::fabs(t_bi - budget);
  add("sync_error_bound", "td_bound <= |t_bi - (max_j t_pro(1,j) + t_ps_tilde)|", td_bound, slack,
      slack - td_bound, "s", td_bound <= slack);

  add("guard_interval", "t_g >= max |t_d(i) - t_d(j)| = 2 * td_bound", t_g, 2.0 * td_bound, t_g - 2.0 * td_bound,
      "s", t_g >= 2.0 * td_bound);

  std::span<const double> row;
  if (!delays.t_pro.empty()) row = delays.t_pro[0];
  const auto c_init = timing::compute_c_initial(delays.t_trans, row, delays.t_ps_tilde, clock.t_clock());
  const auto bi_end = static_cast<double>(table.ticks(table.beacon_tx + table.beacon_interval));
  add("compensation_in_beacon_interval", "c_initial < (t_bt + t_bi) / t_clock", static_cast<double>(c_init.ticks),
      bi_end, bi_end - static_cast<double>(c_init.ticks), "ticks", static_cast<double>(c_init.ticks) < bi_end);
  return out;
}

std::vector<ConstraintCheck> validate_slot_table(const SlotTable& table, const timing::ClockConfig& clock,
                                                 const timing::DelayModel& delays, double td_bound) {
  auto all = check_slot_table(table, clock, delays, td_bound);
  std::erase_if(all, [](const ConstraintCheck& c) { return c.ok; });
  return all;
}

Capacity capacity(const SlotTable& table, double period_s) {
  const double info = static_cast<double>(table.info);
  return {table.info_slots() * info / period_s, (table.nodes - 1) * info / period_s};
}

std::vector<TxInterval> transmit_trace(const SlotTable& table, std::span<const std::int64_t> ahead_ticks,
                                       int periods) {
  if (ahead_ticks.size() != static_cast<std::size_t>(table.nodes)) {
    throw std::invalid_argument("transmit_trace: one offset per node required");
  }
  const auto master = timeline(table, Role::Master);
  const auto slave = timeline(table, Role::Slave);
  const std::int64_t period = table.period_ticks();
  std::vector<TxInterval> out;
  for (int p = 0; p < periods; ++p) {
    for (int node = 1; node <= table.nodes; ++node) {
      const auto& tl = node == 1 ? master : slave;
      const std::int64_t shift = p * period - ahead_ticks[static_cast<std::size_t>(node - 1)];
      for (const auto& e : tl) {
        const bool tx = (e.slot.type == SlotKind::Type::BeaconTx && node == 1) ||
                        (e.slot.type == SlotKind::Type::Info && e.slot.i == node);
        if (tx) out.push_back({node, p + 1, e.slot, e.start + shift, e.end + shift});
      }
    }
  }
  return out;
}

std::vector<std::pair<TxInterval, TxInterval>> find_overlaps(std::vector<TxInterval> intervals) {
  std::sort(intervals.begin(), intervals.end(), [](const TxInterval& a, const TxInterval& b) {
    return a.start != b.start ? a.start < b.start : a.node < b.node;
  });
  std::vector<std::pair<TxInterval, TxInterval>> out;
  for (std::size_t a = 0; a < intervals.size(); ++a) {
    for (std::size_t b = a + 1; b < intervals.size() && intervals[b].start < intervals[a].end; ++b) {
      if (intervals[a].node != intervals[b].node) out.emplace_back(intervals[a], intervals[b]);
    }
  }
  return out;
}

namespace {

std::uint16_t frame_crc(std::span<const std::uint8_t> bits) {
  boost::crc_basic<16> crc(0x1021, 0xFFFF, 0, false, false);
  for (std::uint8_t b : bits) crc.process_bit(b != 0);
  return static_cast<std::uint16_t>(crc.checksum());
}

void push_word(std::vector<std::uint8_t>& out, std::uint32_t word, std::size_t width) {
  for (std::size_t k = width; k-- > 0;) out.push_back(static_cast<std::uint8_t>((word >> k) & 1u));
}

std::uint32_t read_word(std::span<const std::uint8_t> bits) {
  std::uint32_t w = 0;
  for (std::uint8_t b : bits) w = (w << 1) | (b & 1u);
  return w;
}

}  // namespace

std::vector<std::uint8_t> build_frame(std::span<const std::uint8_t> payload, std::uint16_t seq_no) {
  std::vector<std::uint8_t> out;
  out.reserve(frame_length(payload.size()));
  push_word(out, kSyncWord, kSyncBits);
  push_word(out, seq_no, kSeqBits);
  for (std::uint8_t b : payload) out.push_back(b & 1u);
  const auto body = std::span<const std::uint8_t>(out).subspan(kSyncBits);
  push_word(out, frame_crc(body), kCrcBits);
  return out;
}

ParsedFrame parse_frame(std::span<const std::uint8_t> bits, std::size_t payload_bits) {
  ParsedFrame res;
  if (bits.size() < frame_length(payload_bits)) {
    res.status = ParsedFrame::Status::Truncated;
    return res;
  }
  res.sync_distance = std::popcount(read_word(bits.first(kSyncBits)) ^ kSyncWord);
  if (res.sync_distance != 0) {
    res.status = ParsedFrame::Status::NoSync;
    return res;
  }
  const auto body = bits.subspan(kSyncBits, kSeqBits + payload_bits);
  const auto crc = static_cast<std::uint16_t>(read_word(bits.subspan(kSyncBits + kSeqBits + payload_bits, kCrcBits)));
  res.seq_no = static_cast<std::uint16_t>(read_word(body.first(kSeqBits)));
  res.payload.assign(body.begin() + kSeqBits, body.end());
  res.status = frame_crc(body) == crc ? ParsedFrame::Status::Ok : ParsedFrame::Status::BadChecksum;
  return res;
}

}  // namespace uvnet::mac
