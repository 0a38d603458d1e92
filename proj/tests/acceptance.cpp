// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>

#include <boost/math/distributions/poisson.hpp>

#include "support.hpp"
#include "uvnet/beacon.hpp"
#include "uvnet/mac.hpp"
#include "uvnet/phy.hpp"
#include "uvnet/sim.hpp"

using namespace uvnet;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  failures += !v.pass;
  std::printf("[%s] %d %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string num(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(k, v.size() - 1)];
}

Verdict period_identity() {
  const auto cfg = testsupport::load_config("paper_default.cfg");
  const auto& t = cfg.scenario.table;
  const std::int64_t symbols = t.period_symbols();
  const std::int64_t expected = 256 + 256 + 12 * (137'500 + 29'124);
  const double seconds = static_cast<double>(t.period_ticks()) * cfg.scenario.clock.t_clock();
  const bool ok = symbols == expected && symbols == 2'000'000 && t.period_ticks() == cfg.scenario.clock.ticks_per_period &&
                  cfg.scenario.clock.ticks_per_period * cfg.scenario.clock.tick_ps == 1'000'000'000'000;
  return {ok, std::to_string(symbols) + " symbols, " + num(seconds, 10) + " s"};
}

Verdict pre_compensation_offset() {
  const double target = 132.941e-6;
  const int reps = 100;
  int max_ok = 0, mean_ok = 0;
  double worst_z = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto s = testsupport::load_config("paper_default.cfg").scenario;
    s.seed = 1000 + static_cast<std::uint64_t>(r);
    const int far = static_cast<int>(s.delay_model().farthest_slave()) + 1;
    std::vector<double> pre;
    for (const auto& x : sim::run_sync_trial(s, 100)) {
      if (x.node == far) pre.push_back(x.pre_s);
    }
    const auto mv = testsupport::mean_var(pre.begin(), pre.end());
    const double se = std::sqrt(mv.var / static_cast<double>(pre.size()));
    const double z = std::fabs(mv.mean - target) / se;
    worst_z = std::max(worst_z, z);
    mean_ok += z <= 3.0;
    max_ok += *std::max_element(pre.begin(), pre.end()) < 133e-6;
  }
  const bool ok = mean_ok >= 95 && max_ok >= 95;
  return {ok, "mean within 3 SE in " + std::to_string(mean_ok) + "/100, max < 133 us in " + std::to_string(max_ok) +
                  "/100, worst |z| " + num(worst_z, 3)};
}

Verdict post_compensation_error() {
  const auto s = testsupport::load_config("lab.cfg").scenario;
  std::vector<double> td, pre;
  for (const auto& x : sim::run_sync_trial(s, 1000)) {
    td.push_back(std::fabs(x.post_s));
    pre.push_back(x.pre_s);
  }
  const double p99 = quantile(td, 0.99);

  auto wide = s;
  wide.processing = timing::DelayDistribution::truncated_normal(s.processing.mean(), 122.474e-9, 0.0, 10e-6);
  std::vector<double> td_wide;
  for (const auto& x : sim::run_sync_trial(wide, 1000)) td_wide.push_back(std::fabs(x.post_s));

  return {p99 < 100e-9, "sd " + num(s.processing.stddev() * 1e9, 4) + " ns: p99 |t_d| " + num(p99 * 1e9, 4) +
                            " ns (median offset before compensation " + num(quantile(pre, 0.5) * 1e6, 6) +
                            " us); for reference sd 122 ns gives p99 " + num(quantile(td_wide, 0.99) * 1e9, 4) + " ns"};
}

Verdict guard_contrast() {
  const auto cfg = testsupport::load_config("paper_default.cfg");
  const auto& s = cfg.scenario;
  const auto checks = mac::validate_slot_table(s.table, s.clock, s.delay_model(), s.td_bound);
  if (!checks.empty()) return {false, "paper_default table fails " + checks.front().name};
  const auto bound = static_cast<std::int64_t>(std::floor(s.td_bound / s.clock.t_clock()));
  Rng rng(2718);
  int overlapping = 0;
  const int trials = 300;
  for (int k = 0; k < trials; ++k) {
    std::vector<std::int64_t> ahead(4, 0);
    for (std::size_t n = 1; n < 4; ++n) {
      ahead[n] = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(2 * bound + 1)) - bound;
    }
    overlapping += !mac::find_overlaps(mac::transmit_trace(s.table, ahead, 3)).empty();
  }
  auto bare = s.table;
  bare.guard = 0;
  const std::vector<std::int64_t> ahead = {0, bound, 0, 0};
  const auto contrast = mac::find_overlaps(mac::transmit_trace(bare, ahead, 3)).size();
  return {overlapping == 0 && contrast >= 1, std::to_string(overlapping) + "/" + std::to_string(trials) +
                                                 " guarded traces overlap; guard 0 with a " + std::to_string(bound) +
                                                 "-tick offset gives " + std::to_string(contrast) + " overlaps"};
}

Verdict frame_delivery() {
  auto s = testsupport::load_config("paper_default.cfg", {{"lambda_s", "10"}, {"lambda_b", "0.1"},
                                                          {"frames_per_node", "100"}})
               .scenario;
  const auto m = sim::run(s);
  std::string detail;
  bool ok = true;
  for (int node = 1; node <= 4; ++node) {
    const auto received = m.frame_receive_num(node);
    const auto correct = m.frame_correct_num(node);
    ok = ok && received == 300 && correct == 300;
    detail += "node " + std::to_string(node) + " " + std::to_string(correct) + "/" + std::to_string(received) + "/" +
              std::to_string(m.frames_addressed(node)) + "; ";
  }
  const double p = phy::ook_error_probability(s.means);
  const double frame_ok = std::pow(1 - p, static_cast<double>(mac::frame_length(static_cast<std::size_t>(s.payload_bits))));
  detail += "correct/received/addressed; uncoded symbol error " + num(p, 3) + " gives frame success " +
            num(frame_ok, 3) + " per 1088-symbol frame";
  return {ok, detail};
}

Verdict autocorrelation() {
  const auto s = beacon::bipolar(beacon::generate_msequence(8, beacon::kDefaultTaps8, 255));
  int bad = 0;
  for (std::size_t lag = 0; lag < 255; ++lag) {
    long acc = 0;
    for (std::size_t k = 0; k < 255; ++k) acc += s[k] * s[(k + lag) % 255];
    bad += acc != (lag == 0 ? 255 : -1);
  }
  return {bad == 0, std::to_string(255 - bad) + "/255 lags match"};
}

double ref_pmf(std::int64_t n, double mean) {
  if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
  return boost::math::pdf(boost::math::poisson_distribution<double>(mean), static_cast<double>(n));
}

double ref_cdf(std::int64_t n, double mean) {
  if (n < 0) return 0.0;
  if (mean == 0.0) return 1.0;
  return boost::math::cdf(boost::math::poisson_distribution<double>(mean), static_cast<double>(n));
}

Verdict detection() {
  const double signal[] = {0.3, 0.7, 1.5, 2.5, 4.0, 6.0, 9.0, 13.0, 20.0, 35.0};
  const double background[] = {0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 3.5, 5.0, 8.0, 12.0};
  int mismatches = 0;
  for (double sg : signal) {
    for (double b : background) {
      for (std::int64_t n = 0; n <= 100; ++n) {
        mismatches += phy::ml_detect_symbol(n, {sg, b}) != (ref_pmf(n, sg + b) >= ref_pmf(n, b) ? 1 : 0);
      }
    }
  }
  const phy::PoissonMeans means{10.0, 1.0};
  const auto threshold = phy::ml_threshold(means);
  const double analytic = 0.5 * (ref_cdf(threshold - 1, 11.0) + (1.0 - ref_cdf(threshold - 1, 1.0)));
  Rng rng(4242);
  const int symbols = 1'000'000;
  int errors = 0;
  for (int k = 0; k < symbols; ++k) {
    const int bit = rng.bit();
    errors += phy::ml_detect_symbol(phy::sample_symbol_count(bit, means, rng), means) != bit;
  }
  const double ber = static_cast<double>(errors) / symbols;
  const double z = std::fabs(ber - analytic) / std::sqrt(analytic * (1 - analytic) / symbols);
  return {mismatches == 0 && z < 3.0, std::to_string(mismatches) + " grid mismatches; BER " + num(ber, 5) +
                                          " vs analytic " + num(analytic, 5) + ", |z| " + num(z, 3)};
}

bool machine_matches(const mac::SlotTable& table) {
  using namespace mac;
  const std::int64_t period = table.period_ticks();
  NodeState master = make_master(table);
  for (std::int64_t c = 0; c < period; ++c) {
    if (master.counter.value() != c || !(master.current == slot_at(c, table, Role::Master))) return false;
    master = step_state_machine(master, table).state;
  }
  const std::int64_t c_init = table.ticks(table.beacon_tx) + 1;
  NodeState slave = step_state_machine(make_slave(2, table, c_init), table, StepEvents{true}).state;
  if (!slave.synced) return false;
  for (std::int64_t c = c_init; c < period; ++c) {
    if (slave.counter.value() != c || !(slave.current == slot_at(c, table, Role::Slave))) return false;
    slave = step_state_machine(slave, table).state;
  }
  return true;
}

Verdict oracle_equivalence() {
  std::string detail;
  bool ok = true;
  for (int n : {2, 3, 4}) {
    mac::SlotTable t;
    t.nodes = n;
    t.info = 1300;
    t.guard = 291;
    const bool m = machine_matches(t);
    ok = ok && m && t.period_ticks() <= 1'000'000;
    detail += "N=" + std::to_string(n) + " (" + std::to_string(t.period_ticks()) + " ticks) " + (m ? "agree" : "differ") +
              (n < 4 ? "; " : "");
  }
  return {ok, detail};
}

Verdict throughput() {
  const auto cfg = testsupport::load_config("paper_default.cfg");
  const auto c = mac::capacity(cfg.scenario.table, cfg.scenario.clock.period());
  const bool ok = c.raw_aggregate_bps == 1'650'000.0 && c.per_node_bps == 412'500.0;
  return {ok, "raw aggregate " + num(c.raw_aggregate_bps / 1e6, 6) + " Mbps, per node " +
                  num(c.per_node_bps / 1e3, 6) + " kbps; the 800 kbps headline figure does not follow from the slot table"};
}

}  // namespace

int main() {
  report(1, "period identity", period_identity);
  report(2, "pre-compensation sync offset", pre_compensation_offset);
  report(3, "post-compensation error", post_compensation_error);
  report(4, "guard-interval contrast", guard_contrast);
  report(5, "frame delivery", frame_delivery);
  report(6, "m-sequence autocorrelation", autocorrelation);
  report(7, "detection oracle", detection);
  report(8, "state-machine oracle equivalence", oracle_equivalence);
  report(9, "throughput accounting", throughput);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
