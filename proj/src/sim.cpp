#include "uvnet/sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "uvnet/rng.hpp"

namespace uvnet::sim {

// ---------------------------------------------------------------------------
// Faults

Fault parse_fault(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  auto num = [&](std::size_t k) -> std::int64_t {
    try {
      std::size_t used = 0;
      const auto v = std::stoll(parts.at(k), &used);
      if (used != parts[k].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ScenarioError("malformed fault '" + spec + "'");
    }
  };
  if (parts.empty()) throw ScenarioError("empty fault spec");
  if (parts[0] == "drop_beacon" && parts.size() == 2) return Fault::drop_beacon(static_cast<int>(num(1)));
  if (parts[0] == "offset_clock" && parts.size() == 3) {
    return Fault::offset_clock(static_cast<int>(num(1)), num(2));
  }
  if (parts[0] == "jam" && parts.size() == 5) {
    double intensity = 0.0;
    try {
      std::size_t used = 0;
      intensity = std::stod(parts[4], &used);
      if (used != parts[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ScenarioError("malformed fault '" + spec + "'");
    }
    return Fault::jam(static_cast<int>(num(1)), num(2), num(3), intensity);
  }
  throw ScenarioError("malformed fault '" + spec + "'");
}

std::string to_string(const Fault& f) {
  switch (f.kind) {
    case Fault::Kind::DropBeacon:
      return "drop_beacon:" + std::to_string(f.period);
    case Fault::Kind::Jam: {
      std::ostringstream os;
      os << "jam:" << f.node << ':' << f.start << ':' << f.end << ':' << f.intensity;
      return os.str();
    }
    case Fault::Kind::OffsetClock:
      return "offset_clock:" + std::to_string(f.node) + ":" + std::to_string(f.ticks);
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Scenario

double Scenario::symbol_duration() const {
  return static_cast<double>(table.ticks_per_symbol) * clock.t_clock();
}

double Scenario::t_trans() const { return timing::compute_t_trans(beacon_bits, symbol_duration()); }

timing::DelayModel Scenario::delay_model() const {
  timing::DelayModel d;
  d.t_trans = t_trans();
  d.t_pro = timing::DelayModel::propagation_matrix(positions_m);
  d.t_ps = processing;
  d.t_ps_tilde = t_ps_tilde;
  return d;
}

std::int64_t Scenario::c_initial_ticks() const {
  const auto d = delay_model();
  return timing::compute_c_initial(d.t_trans, d.t_pro.at(0), d.t_ps_tilde, clock.t_clock()).ticks;
}

double Scenario::gain(int src, int dst) const {
  const auto it = link_gain.find({src, dst});
  return it == link_gain.end() ? 1.0 : it->second;
}

std::vector<Receiver> Scenario::receivers(int node) const {
  std::vector<int> peers;
  for (int k = 1; k <= nodes(); ++k) {
    if (k != node) peers.push_back(k);
  }
  std::vector<Receiver> out;
  for (int r = 1; r <= receivers_per_node; ++r) {
    const auto it = receiver_gain.find({node, r});
    const int faces = static_cast<std::size_t>(r - 1) < peers.size() ? peers[static_cast<std::size_t>(r - 1)] : 0;
    out.push_back({r, faces, it == receiver_gain.end() ? 1.0 : it->second});
  }
  return out;
}

std::pair<Receiver, double> Scenario::select_receiver(int node, int src) const {
  const auto rx = receivers(node);
  auto effective = [&](const Receiver& r) { return gain(src, node) * (r.faces == src ? 1.0 : off_axis_gain) * r.gain; };
  if (combining == Combining::Facing) {
    for (const auto& r : rx) {
      if (r.faces == src) return {r, effective(r)};
    }
  }
  // Best-oriented receiver; ties go to the lowest id.
  std::size_t best = 0;
  for (std::size_t k = 1; k < rx.size(); ++k) {
    if (effective(rx[k]) > effective(rx[best])) best = k;
  }
  return {rx[best], effective(rx[best])};
}

int Scenario::frames_per_slot() const {
  const auto len = static_cast<std::int64_t>(mac::frame_length(static_cast<std::size_t>(payload_bits)));
  return static_cast<int>((table.info - preamble_symbols) / len);
}

int Scenario::effective_max_periods() const {
  if (max_periods > 0) return max_periods;
  const std::int64_t cap = std::max(1, frames_per_slot());
  return static_cast<int>(2 * ((frames_per_node + cap - 1) / cap) + 2);
}

void Scenario::check_structure() const {
  const int n = nodes();
  if (n < 2) throw ScenarioError("scenario needs at least 2 nodes");
  if (table.nodes != n) throw ScenarioError("slot table node count differs from the node list");
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (positions_m[static_cast<std::size_t>(a)] == positions_m[static_cast<std::size_t>(b)]) {
        throw ScenarioError("node positions must be pairwise distinct");
      }
    }
  }
  try {
    table.validate();
    means.validate();
  } catch (const std::domain_error& e) {
    throw ScenarioError(e.what());
  }
  if (table.ticks_per_symbol % chips_per_symbol != 0) {
    throw ScenarioError("chip duration must be an integer number of clock ticks");
  }
  try {
    beacon::generate_msequence(lfsr_degree, lfsr_taps, static_cast<std::size_t>(beacon_bits));
  } catch (const beacon::ConfigError& e) {
    throw ScenarioError(std::string("beacon: ") + e.what());
  }
  if (receivers_per_node < 1) throw ScenarioError("receivers_per_node must be >= 1");
  if (payload_bits < 1) throw ScenarioError("payload_bits must be >= 1");
  if (preamble_symbols < 2 || preamble_symbols % 2 != 0) throw ScenarioError("preamble_symbols must be even and >= 2");
  if (frames_per_node < 0) throw ScenarioError("frames_per_node must be nonnegative");
  if (frames_per_slot() < 1) throw ScenarioError("info slot too short for one frame");
  if (frames_per_node > 0xFFFF * std::int64_t{1} + 1) throw ScenarioError("frames_per_node exceeds the 16-bit sequence space");
  if (!(detect_threshold_ratio > 0.0)) throw ScenarioError("detect_threshold_ratio must be positive");
  for (const auto& [key, g] : link_gain) {
    if (!(g >= 0.0)) throw ScenarioError("link gains must be nonnegative");
  }
  for (const auto& [key, g] : receiver_gain) {
    if (!(g >= 0.0)) throw ScenarioError("receiver gains must be nonnegative");
  }
  const std::int64_t period = table.period_ticks();
  const std::int64_t c_init = c_initial_ticks();
  for (const auto& f : faults) {
    switch (f.kind) {
      case Fault::Kind::DropBeacon:
        if (f.period < 1) throw ScenarioError("drop_beacon period must be >= 1");
        break;
      case Fault::Kind::Jam:
        if (f.node < 1 || f.node > n || f.start >= f.end || !(f.intensity >= 0.0)) {
          throw ScenarioError("jam needs a valid node, start < end and intensity >= 0");
        }
        break;
      case Fault::Kind::OffsetClock:
        if (f.node < 2 || f.node > n) throw ScenarioError("offset_clock applies to a slave node");
        if (c_init + f.ticks < 0 || c_init + f.ticks >= period) {
          throw ScenarioError("offset_clock pushes c_initial outside the period");
        }
        break;
    }
  }
}

std::vector<mac::ConstraintCheck> Scenario::constraints() const {
  return mac::check_slot_table(table, clock, delay_model(), td_bound);
}

std::vector<mac::ConstraintCheck> Scenario::violations() const {
  return mac::validate_slot_table(table, clock, delay_model(), td_bound);
}

Scenario inject_fault(const Scenario& scenario, const Fault& fault) {
  Scenario out = scenario;
  out.faults.push_back(fault);
  out.check_structure();
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::int64_t RunMetrics::frame_receive_num(int node) const {
  std::int64_t n = 0;
  for (const auto& row : pairs) n += row[static_cast<std::size_t>(node - 1)].received;
  return n;
}

std::int64_t RunMetrics::frame_correct_num(int node) const {
  std::int64_t n = 0;
  for (const auto& row : pairs) n += row[static_cast<std::size_t>(node - 1)].correct;
  return n;
}

std::int64_t RunMetrics::frames_addressed(int node) const {
  std::int64_t n = 0;
  for (const auto& row : pairs) n += row[static_cast<std::size_t>(node - 1)].transmitted;
  return n;
}

std::int64_t RunMetrics::frames_transmitted_total() const {
  std::int64_t n = 0;
  for (const auto& row : pairs) {
    for (const auto& c : row) n += c.transmitted;
  }
  return n;
}

double RunMetrics::link_ber(int src, int dst) const {
  const auto& c = pairs[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(dst - 1)];
  return c.bits_demodulated == 0 ? std::nan("") : static_cast<double>(c.bit_errors) / c.bits_demodulated;
}

double RunMetrics::effective_ber(int node, std::int64_t frames_per_pair, int payload_bits) const {
  const double offered = static_cast<double>(frames_per_pair) * (nodes - 1) * payload_bits;
  if (offered <= 0.0) return std::nan("");
  double errors = 0.0;
  double demod = 0.0;
  for (const auto& row : pairs) {
    const auto& c = row[static_cast<std::size_t>(node - 1)];
    errors += static_cast<double>(c.bit_errors);
    demod += static_cast<double>(c.bits_demodulated);
  }
  return (errors + 0.5 * std::max(0.0, offered - demod)) / offered;
}

double RunMetrics::goodput_bps(int node, int payload_bits) const {
  return simulated_s > 0.0 ? static_cast<double>(frame_correct_num(node)) * payload_bits / simulated_s : 0.0;
}

// ---------------------------------------------------------------------------
// Engine

namespace {

enum class EventKind { PeriodStart = 0, BeaconDecode = 1, SlotEnd = 2 };

struct Event {
  std::int64_t time = 0;
  int node = 0;
  EventKind kind = EventKind::PeriodStart;
  std::uint64_t seq = 0;
  int period = 0;
  int dst = 0;
  std::int64_t slot_start = 0;
  int frames = 0;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    return std::tie(a.time, a.node, a.kind, a.seq) > std::tie(b.time, b.node, b.kind, b.seq);
  }
};

struct Interval {
  int node = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::string label;
};

struct SyncWindow {
  std::int64_t from = 0;
  std::int64_t until = 0;
};

class Engine {
 public:
  explicit Engine(const Scenario& s)
      : s_(s),
        n_(s.nodes()),
        tps_(s.table.ticks_per_symbol),
        period_(s.table.period_ticks()),
        t_clock_(s.clock.t_clock()),
        chips_(s.chips_per_symbol, s.symbol_duration()),
        delays_(s.delay_model()),
        beacon_(beacon::generate_msequence(s.lfsr_degree, s.lfsr_taps, static_cast<std::size_t>(s.beacon_bits))),
        c_init_(s.c_initial_ticks()),
        frame_len_(static_cast<std::int64_t>(mac::frame_length(static_cast<std::size_t>(s.payload_bits)))),
        cap_(s.frames_per_slot()),
        max_periods_(s.effective_max_periods()),
        master_timeline_(mac::timeline(s.table, mac::Role::Master)),
        slave_timeline_(mac::timeline(s.table, mac::Role::Slave)) {
    const auto nn = static_cast<std::size_t>(n_);
    remaining_.assign(nn, std::vector<std::int64_t>(nn, s.frames_per_node));
    for (std::size_t k = 0; k < nn; ++k) remaining_[k][k] = 0;
    next_seq_.assign(nn, std::vector<std::uint16_t>(nn, 0));
    offset_.assign(nn, 0);
    sync_.assign(nn, {});
    history_.assign(nn, {});
    m_.nodes = n_;
    m_.pairs.assign(nn, std::vector<PairCounters>(nn));
    m_.capacity = mac::capacity(s.table, static_cast<double>(period_) * t_clock_);
    for (const auto& f : s.faults) {
      if (f.kind == Fault::Kind::OffsetClock) offset_[static_cast<std::size_t>(f.node - 1)] += f.ticks;
      if (f.kind == Fault::Kind::DropBeacon) dropped_.insert(f.period);
    }
    for (int k = 1; k <= n_; ++k) {
      tx_rng_.push_back(Rng::substream(s.seed, static_cast<std::uint64_t>(k), "payload"));
      beacon_rng_.push_back(Rng::substream(s.seed, static_cast<std::uint64_t>(k), "beacon"));
      delay_rng_.push_back(Rng::substream(s.seed, static_cast<std::uint64_t>(k), "procdelay"));
      for (const auto& r : s.receivers(k)) {
        rx_rng_.emplace(std::make_pair(k, r.id),
                        Rng::substream(s.seed, static_cast<std::uint64_t>(k), "rx:" + std::to_string(r.id)));
      }
    }
    // Chip slack after the beacon covers the farthest arrival plus two symbols.
    const double max_pro = delays_.max_master_propagation();
    window_chips_ = static_cast<std::size_t>(beacon_.size()) * chips_.chips_per_symbol() +
                    static_cast<std::size_t>(3 * chips_.chips_per_symbol() - 1) +
                    static_cast<std::size_t>(std::ceil(max_pro / chips_.chip_duration()));
  }

  RunMetrics run() {
    push({0, 1, EventKind::PeriodStart, 0, 1});
    while (!queue_.empty()) {
      const Event e = queue_.top();
      queue_.pop();
      switch (e.kind) {
        case EventKind::PeriodStart:
          on_period_start(e);
          break;
        case EventKind::BeaconDecode:
          on_beacon_decode(e);
          break;
        case EventKind::SlotEnd:
          on_slot_end(e);
          break;
      }
    }
    m_.simulated_s = static_cast<double>(m_.periods_run) * static_cast<double>(period_) * t_clock_;
    std::stable_sort(m_.trace.begin(), m_.trace.end(), [](const TraceEvent& a, const TraceEvent& b) {
      return std::tie(a.time, a.node) < std::tie(b.time, b.node);
    });
    return std::move(m_);
  }

 private:
  void push(Event e) {
    e.seq = seq_++;
    queue_.push(e);
  }

  void log(std::int64_t time, int node, std::string kind, std::string detail = {}) {
    if (s_.trace) m_.trace.push_back({time, node, std::move(kind), std::move(detail)});
  }

  bool all_reserved() const {
    for (const auto& row : remaining_) {
      for (auto r : row) {
        if (r > 0) return false;
      }
    }
    return true;
  }

  double jam(int node, std::int64_t t) const {
    double extra = 0.0;
    for (const auto& f : s_.faults) {
      if (f.kind == Fault::Kind::Jam && f.node == node && t >= f.start && t < f.end) extra += f.intensity;
    }
    return extra;
  }

  bool receiver_synced(int node, std::int64_t from, std::int64_t to) const {
    if (node == 1) return true;
    const auto& h = history_[static_cast<std::size_t>(node - 1)];
    for (auto it = h.rbegin(); it != h.rend(); ++it) {
      if (from >= it->from && to <= it->until) return true;
      if (it->until < from) break;
    }
    return false;
  }

  void on_period_start(const Event& e) {
    const int p = e.period;
    if (p > max_periods_ || all_reserved()) return;
    m_.periods_run = p;
    m_.delivered_per_period.push_back(0);
    const std::int64_t start = static_cast<std::int64_t>(p - 1) * period_;
    log(start, 1, "period_start", std::to_string(p));

    std::erase_if(occupancy_, [&](const Interval& iv) { return iv.end < start - period_; });
    std::erase_if(on_air_, [&](const Interval& iv) { return iv.end < start - period_; });

    const bool dropped = dropped_.contains(p);
    if (dropped) {
      log(start, 1, "beacon_dropped", std::to_string(p));
    } else {
      ++m_.beacons_sent;
    }
    register_schedule(1, start, 0, p, !dropped);

    for (int slave = 2; slave <= n_; ++slave) receive_beacon(slave, p, start, !dropped);

    push({start + period_, 1, EventKind::PeriodStart, 0, p + 1});
  }

  void receive_beacon(int node, int period, std::int64_t start, bool beacon_present) {
    const auto idx = static_cast<std::size_t>(node - 1);
    const auto [rx, g] = s_.select_receiver(node, 1);
    Rng& rng = beacon_rng_[idx];
    const int m = chips_.chips_per_symbol();
    const std::int64_t chip_ticks = tps_ / m;
    const auto arrival = static_cast<std::size_t>(std::llround(delays_.t_pro[0][idx] / chips_.chip_duration()));
    const std::size_t beacon_chips = beacon_.size() * static_cast<std::size_t>(m);

    std::vector<std::int64_t> window(window_chips_, 0);
    auto chip_time = [&](std::size_t c) { return start + static_cast<std::int64_t>(c) * chip_ticks; };
    std::size_t c = 0;
    for (; c < window_chips_; ++c) {
      if (beacon_present && c == arrival) {
        for (std::size_t k = 0; k < beacon_.size(); ++k, c += static_cast<std::size_t>(m)) {
          const phy::PoissonMeans means{g * s_.means.lambda_s, s_.means.lambda_b + jam(node, chip_time(c))};
          const auto counts = phy::sample_chip_counts(beacon_.bits[k], means, chips_, rng);
          std::copy(counts.begin(), counts.end(), window.begin() + static_cast<std::ptrdiff_t>(c));
        }
        if (c >= window_chips_) break;
      }
      window[c] = phy::sample_poisson((s_.means.lambda_b + jam(node, chip_time(c))) / m, rng);
    }
    (void)beacon_chips;

    const auto detected = beacon::detect_beacon(window, beacon_, m, s_.detect_threshold_ratio);
    if (!detected) {
      if (beacon_present) {
        ++m_.beacons_missed;
        log(start, node, "beacon_missed", std::to_string(period));
      }
      return;
    }
    if (beacon_present) {
      ++m_.beacons_detected;
      if (*detected != arrival) ++m_.beacon_offset_errors;
    } else {
      ++m_.beacon_false_alarms;
      log(start, node, "beacon_false_alarm", std::to_string(period));
    }
    const double t_ps = timing::sample_processing_delay(delays_, delay_rng_[idx]);
    const double est = static_cast<double>(*detected) * chips_.chip_duration();
    const std::int64_t at = start + std::llround((est + delays_.t_trans + t_ps) / t_clock_);
    push({at, node, EventKind::BeaconDecode, 0, period});
  }

  void on_beacon_decode(const Event& e) {
    const int node = e.node;
    const auto idx = static_cast<std::size_t>(node - 1);
    if (sync_[idx].until > e.time) {
      ++m_.beacons_ignored;
      log(e.time, node, "beacon_ignored", std::to_string(e.period));
      return;
    }
    const std::int64_t c_eff = c_init_ + offset_[idx];
    sync_[idx] = {e.time, e.time + (period_ - c_eff)};
    history_[idx].push_back(sync_[idx]);
    const std::int64_t master_start = static_cast<std::int64_t>(e.period - 1) * period_;
    const std::int64_t elapsed = e.time - master_start;
    m_.sync.push_back({e.period, node, static_cast<double>(elapsed) * t_clock_,
                       static_cast<double>(c_eff - elapsed) * t_clock_});
    log(e.time, node, "beacon_decode", "counter=" + std::to_string(c_eff));
    register_schedule(node, e.time, c_eff, e.period, false);
  }

  // Lays out one period of `node`'s schedule from an anchor (absolute tick at
  // which the counter reads `anchor_counter`).
  void register_schedule(int node, std::int64_t anchor_abs, std::int64_t anchor_counter, int period,
                         bool beacon_on_air) {
    const auto& tl = node == 1 ? master_timeline_ : slave_timeline_;
    for (const auto& entry : tl) {
      if (entry.start < anchor_counter) continue;
      const std::int64_t a = anchor_abs + (entry.start - anchor_counter);
      const std::int64_t b = anchor_abs + (entry.end - anchor_counter);
      log(a, node, "slot", entry.slot.to_string());
      const bool is_beacon = entry.slot.type == mac::SlotKind::Type::BeaconTx;
      const bool is_info = entry.slot.type == mac::SlotKind::Type::Info && entry.slot.i == node;
      if (!(is_info || (is_beacon && beacon_on_air))) continue;

      const std::string label = entry.slot.to_string();
      for (const auto& other : occupancy_) {
        if (other.node != node && other.start < b && a < other.end) {
          ++m_.overlap_events;
          log(a, node, "overlap", label + " x " + other.label);
        }
      }
      occupancy_.push_back({node, a, b, label});

      if (is_beacon) {
        on_air_.push_back({node, a, b, label});
        continue;
      }
      const auto src = static_cast<std::size_t>(node - 1);
      const auto dst = static_cast<std::size_t>(entry.slot.j - 1);
      const auto frames = static_cast<int>(std::min<std::int64_t>(remaining_[src][dst], cap_));
      remaining_[src][dst] -= frames;
      if (frames == 0) continue;
      on_air_.push_back({node, a, a + (s_.preamble_symbols + frames * frame_len_) * tps_, label});
      Event ev{b, node, EventKind::SlotEnd, 0, period};
      ev.dst = entry.slot.j;
      ev.slot_start = a;
      ev.frames = frames;
      push(ev);
    }
  }

  struct Interferer {
    std::int64_t start, end;
    double mean;  ///< signal photons per symbol when the interferer sends a 1
  };

  std::vector<Interferer> interferers(int src, int dst, const Receiver& rx, std::int64_t from, std::int64_t to) const {
    std::vector<Interferer> out;
    for (const auto& iv : on_air_) {
      if (iv.node == src || iv.node == dst || iv.end <= from || iv.start >= to) continue;
      const double g = s_.gain(iv.node, dst) * (rx.faces == iv.node ? 1.0 : s_.off_axis_gain) * rx.gain;
      out.push_back({iv.start, iv.end, g * s_.means.lambda_s});
    }
    return out;
  }

  std::int64_t symbol_count(int dst, int bit, double signal, std::int64_t t, const std::vector<Interferer>& interf,
                            Rng& rng) const {
    const phy::PoissonMeans means{signal, s_.means.lambda_b + jam(dst, t)};
    std::int64_t count = phy::sample_symbol_count(bit, means, rng);
    for (const auto& i : interf) {
      if (t >= i.start && t < i.end && rng.bit()) count += phy::sample_poisson(i.mean, rng);
    }
    return count;
  }

  void on_slot_end(const Event& e) {
    const int src = e.node;
    const int dst = e.dst;
    auto& pc = m_.pairs[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(dst - 1)];
    const auto [rx, g] = s_.select_receiver(dst, src);
    Rng& rng = rx_rng_.at({dst, rx.id});
    Rng& tx = tx_rng_[static_cast<std::size_t>(src - 1)];
    const double signal = g * s_.means.lambda_s;
    const std::int64_t slot_end_air = e.slot_start + (s_.preamble_symbols + e.frames * frame_len_) * tps_;
    const auto interf = interferers(src, dst, rx, e.slot_start, slot_end_air);

    std::optional<std::int64_t> threshold;
    bool estimated = false;
    auto estimate = [&] {
      estimated = true;
      phy::PoissonMeans est{signal, s_.means.lambda_b};
      if (s_.estimation == Estimation::Preamble) {
        double high = 0.0, low = 0.0;
        for (int k = 0; k < s_.preamble_symbols; ++k) {
          const int bit = (k % 2 == 0) ? 1 : 0;
          const auto cnt = symbol_count(dst, bit, signal, e.slot_start + k * tps_, interf, rng);
          (bit ? high : low) += static_cast<double>(cnt);
        }
        // Half-count pseudo-observation: a preamble with no dark counts must
        // not estimate a zero background, which would pin the threshold at 1.
        const double half = s_.preamble_symbols / 2;
        high = (high + 0.5) / half;
        low = (low + 0.5) / half;
        est = {std::max(0.0, high - low), low};
      }
      try {
        threshold = phy::ml_threshold(est);
      } catch (const phy::DegenerateChannel&) {
        threshold.reset();
      }
    };

    const std::size_t payload_bits = static_cast<std::size_t>(s_.payload_bits);
    std::vector<std::uint8_t> payload(payload_bits);
    std::vector<std::uint8_t> decoded;
    std::int64_t slot_correct = 0;
    for (int f = 0; f < e.frames; ++f) {
      const std::int64_t f_start = e.slot_start + (s_.preamble_symbols + f * frame_len_) * tps_;
      const std::int64_t f_end = f_start + frame_len_ * tps_;
      for (auto& b : payload) b = static_cast<std::uint8_t>(tx.bit());
      auto& seq = next_seq_[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(dst - 1)];
      const auto frame = mac::build_frame(payload, seq++);
      ++pc.transmitted;
      if (!receiver_synced(dst, f_start, f_end)) {
        ++pc.dropped_unsynced;
        continue;
      }
      if (!estimated) estimate();
      decoded.resize(frame.size());
      for (std::size_t k = 0; k < frame.size(); ++k) {
        const auto cnt = symbol_count(dst, frame[k], signal, f_start + static_cast<std::int64_t>(k) * tps_, interf, rng);
        decoded[k] = threshold && cnt >= *threshold ? 1 : 0;
      }
      const std::size_t off = mac::kSyncBits + mac::kSeqBits;
      pc.bits_demodulated += static_cast<std::int64_t>(payload_bits);
      for (std::size_t k = 0; k < payload_bits; ++k) pc.bit_errors += decoded[off + k] != payload[k];

      const auto parsed = mac::parse_frame(decoded, payload_bits);
      if (parsed.status != mac::ParsedFrame::Status::Truncated && parsed.sync_distance <= kSyncTolerance) {
        ++pc.received;
        if (parsed.status == mac::ParsedFrame::Status::Ok) {
          ++pc.correct;
          ++slot_correct;
        }
      } else {
        ++pc.lost;
      }
    }
    if (e.period >= 1 && static_cast<std::size_t>(e.period) <= m_.delivered_per_period.size()) {
      m_.delivered_per_period[static_cast<std::size_t>(e.period - 1)] += slot_correct;
    }
    log(e.time, src, "slot_done",
        "U" + std::to_string(src) + "," + std::to_string(dst) + " frames=" + std::to_string(e.frames) +
            " correct=" + std::to_string(slot_correct));
  }

  static constexpr int kSyncTolerance = 3;

  const Scenario& s_;
  int n_;
  std::int64_t tps_;
  std::int64_t period_;
  double t_clock_;
  phy::ChipConfig chips_;
  timing::DelayModel delays_;
  beacon::BeaconSequence beacon_;
  std::int64_t c_init_;
  std::int64_t frame_len_;
  int cap_;
  int max_periods_;
  std::vector<mac::TimelineEntry> master_timeline_;
  std::vector<mac::TimelineEntry> slave_timeline_;
  std::size_t window_chips_ = 0;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t seq_ = 0;
  std::vector<std::vector<std::int64_t>> remaining_;
  std::vector<std::vector<std::uint16_t>> next_seq_;
  std::vector<std::int64_t> offset_;
  std::set<int> dropped_;
  std::vector<SyncWindow> sync_;
  std::vector<std::vector<SyncWindow>> history_;
  std::vector<Interval> occupancy_;
  std::vector<Interval> on_air_;
  std::vector<Rng> tx_rng_, beacon_rng_, delay_rng_;
  std::map<std::pair<int, int>, Rng> rx_rng_;
  RunMetrics m_;
};

}  // namespace

RunMetrics run(const Scenario& scenario, bool force) {
  scenario.check_structure();
  if (!force) {
    auto bad = scenario.violations();
    if (!bad.empty()) throw ScenarioError("slot table fails admissibility checks", std::move(bad));
  }
  Engine engine(scenario);
  return engine.run();
}

std::vector<SyncSample> run_sync_trial(const Scenario& scenario, int trials) {
  if (trials < 1) throw ScenarioError("trials must be >= 1");
  const auto delays = scenario.delay_model();
  std::vector<Rng> rngs;
  for (int k = 1; k <= scenario.nodes(); ++k) {
    rngs.push_back(Rng::substream(scenario.seed, static_cast<std::uint64_t>(k), "synctrial"));
  }
  std::vector<SyncSample> out;
  out.reserve(static_cast<std::size_t>(trials) * static_cast<std::size_t>(scenario.nodes() - 1));
  for (int t = 1; t <= trials; ++t) {
    for (int node = 2; node <= scenario.nodes(); ++node) {
      const auto idx = static_cast<std::size_t>(node - 1);
      const double t_ps = timing::sample_processing_delay(delays, rngs[idx]);
      out.push_back({t, node, delays.t_trans + delays.t_pro[0][idx] + t_ps, timing::sync_error(node, t_ps, delays)});
    }
  }
  return out;
}

}  // namespace uvnet::sim
