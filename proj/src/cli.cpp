#include "uvnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "uvnet/config.hpp"
#include "uvnet/rng.hpp"
#include "uvnet/sim.hpp"

namespace uvnet::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) v = 0.0;
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(12) << v;
  return os.str();
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write " + path.string());
  f.imbue(std::locale::classic());
  return f;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

void print_constraints(std::ostream& out, const std::vector<mac::ConstraintCheck>& checks) {
  for (const auto& c : checks) {
    out << (c.ok ? "PASS " : "FAIL ") << std::left << std::setw(34) << c.name << ' ' << c.expression
        << "  lhs=" << fmt(c.lhs) << " rhs=" << fmt(c.rhs) << " margin=" << fmt(c.margin) << ' ' << c.unit << '\n';
  }
}

void write_metrics(const fs::path& path, const sim::Scenario& s, const sim::RunMetrics& m) {
  auto f = open_output(path);
  f << "node,frames_addressed,frame_receive_num,frame_correct_num,ber,goodput_bps,frames_sent,dropped_unsynced\n";
  for (int node = 1; node <= m.nodes; ++node) {
    std::int64_t sent = 0;
    std::int64_t dropped = 0;
    for (const auto& c : m.pairs[static_cast<std::size_t>(node - 1)]) sent += c.transmitted;
    for (const auto& row : m.pairs) dropped += row[static_cast<std::size_t>(node - 1)].dropped_unsynced;
    f << node << ',' << m.frames_addressed(node) << ',' << m.frame_receive_num(node) << ','
      << m.frame_correct_num(node) << ',' << fmt(m.effective_ber(node, s.frames_per_node, s.payload_bits)) << ','
      << fmt(m.goodput_bps(node, s.payload_bits)) << ',' << sent << ',' << dropped << '\n';
  }
}

void write_summary(const fs::path& path, const sim::Scenario& s, const sim::RunMetrics& m) {
  auto f = open_output(path);
  std::int64_t received = 0;
  std::int64_t correct = 0;
  for (int node = 1; node <= m.nodes; ++node) {
    received += m.frame_receive_num(node);
    correct += m.frame_correct_num(node);
  }
  f << "metric,value\n";
  f << "periods_run," << m.periods_run << '\n';
  f << "simulated_s," << fmt(m.simulated_s) << '\n';
  f << "frames_transmitted_total," << m.frames_transmitted_total() << '\n';
  f << "frame_receive_num_total," << received << '\n';
  f << "frame_correct_num_total," << correct << '\n';
  f << "overlap_events," << m.overlap_events << '\n';
  f << "beacons_sent," << m.beacons_sent << '\n';
  f << "beacons_detected," << m.beacons_detected << '\n';
  f << "beacons_missed," << m.beacons_missed << '\n';
  f << "beacons_ignored," << m.beacons_ignored << '\n';
  f << "beacon_offset_errors," << m.beacon_offset_errors << '\n';
  f << "beacon_false_alarms," << m.beacon_false_alarms << '\n';
  f << "raw_aggregate_capacity_bps," << fmt(m.capacity.raw_aggregate_bps) << '\n';
  f << "raw_per_node_capacity_bps," << fmt(m.capacity.per_node_bps) << '\n';
  f << "network_goodput_bps," << fmt(m.simulated_s > 0 ? correct * s.payload_bits / m.simulated_s : 0.0) << '\n';
}

void write_sync(const fs::path& path, const std::vector<sim::SyncSample>& trials,
                const std::vector<sim::SyncSample>& in_run) {
  auto f = open_output(path);
  f << "trial,node,source,pre_ns,post_ns\n";
  for (const auto& x : trials) {
    f << x.period << ',' << x.node << ",trial," << fmt(x.pre_s * 1e9) << ',' << fmt(x.post_s * 1e9) << '\n';
  }
  for (const auto& x : in_run) {
    f << x.period << ',' << x.node << ",run," << fmt(x.pre_s * 1e9) << ',' << fmt(x.post_s * 1e9) << '\n';
  }
}

void write_trace(const fs::path& path, const sim::Scenario& s, const sim::RunMetrics& m) {
  auto f = open_output(path);
  f << "time_ticks,time_ns,node,event,detail\n";
  const double tick_ns = static_cast<double>(s.clock.tick_ps) * 1e-3;
  for (const auto& e : m.trace) {
    f << e.time << ',' << fmt(static_cast<double>(e.time) * tick_ns) << ',' << e.node << ',' << e.kind << ",\""
      << e.detail << "\"\n";
  }
}

struct SyncStats {
  double pre_mean_us = 0, pre_max_us = 0, post_sd_ns = 0, post_abs_p99_ns = 0;
};

SyncStats sync_stats(const std::vector<sim::SyncSample>& xs) {
  SyncStats st;
  if (xs.empty()) return st;
  double sum = 0, max = -1e300, psum = 0, psq = 0;
  std::vector<double> abs_post;
  for (const auto& x : xs) {
    sum += x.pre_s;
    max = std::max(max, x.pre_s);
    psum += x.post_s;
    psq += x.post_s * x.post_s;
    abs_post.push_back(std::fabs(x.post_s));
  }
  const double n = static_cast<double>(xs.size());
  std::sort(abs_post.begin(), abs_post.end());
  const auto k = static_cast<std::size_t>(std::ceil(0.99 * n)) - 1;
  st.pre_mean_us = sum / n * 1e6;
  st.pre_max_us = max * 1e6;
  st.post_sd_ns = n > 1 ? std::sqrt(std::max(0.0, (psq - psum * psum / n) / (n - 1))) * 1e9 : 0.0;
  st.post_abs_p99_ns = abs_post[std::min(k, abs_post.size() - 1)] * 1e9;
  return st;
}

std::vector<std::string> split_values(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

int cmd_validate(const std::string& path, std::ostream& out) {
  const auto cfg = config::load(path);
  const auto checks = cfg.scenario.constraints();
  print_constraints(out, checks);
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.ok; });
  out << (ok ? "all constraints satisfied\n" : "constraint check failed\n");
  return ok ? kOk : kConstraintFailure;
}

struct RunOptions {
  std::optional<std::uint64_t> seed;
  bool trace = false;
  bool force = false;
  std::string out;
};

int cmd_run(const std::string& path, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  auto cfg = config::load(path);
  auto& s = cfg.scenario;
  if (opt.seed) s.seed = *opt.seed;
  if (opt.trace) s.trace = true;
  const auto bad = s.violations();
  if (!bad.empty() && !opt.force) {
    err << "schedule is not admissible (use --force to run anyway):\n";
    print_constraints(err, bad);
    return kConstraintFailure;
  }
  const auto dir = prepare_dir(opt.out.empty() ? cfg.out_dir : opt.out);
  const auto metrics = sim::run(s, true);
  const auto trials = sim::run_sync_trial(s, s.sync_trials);

  write_metrics(dir / "metrics.csv", s, metrics);
  write_summary(dir / "summary.csv", s, metrics);
  write_sync(dir / "sync_errors.csv", trials, metrics.sync);
  if (s.trace) write_trace(dir / "trace.csv", s, metrics);

  out << "periods " << metrics.periods_run << ", simulated " << fmt(metrics.simulated_s) << " s\n";
  out << "node  addressed  received  correct  ber\n";
  for (int node = 1; node <= metrics.nodes; ++node) {
    out << std::setw(4) << node << std::setw(11) << metrics.frames_addressed(node) << std::setw(10)
        << metrics.frame_receive_num(node) << std::setw(9) << metrics.frame_correct_num(node) << "  "
        << fmt(metrics.effective_ber(node, s.frames_per_node, s.payload_bits)) << '\n';
  }
  out << "frames sent network-wide " << metrics.frames_transmitted_total() << '\n';
  out << "overlap events " << metrics.overlap_events << '\n';
  out << "raw info-slot capacity " << fmt(metrics.capacity.raw_aggregate_bps) << " bit/s aggregate, "
      << fmt(metrics.capacity.per_node_bps) << " bit/s per node\n";
  const auto st = sync_stats(trials);
  out << "sync trials " << trials.size() << ": pre mean " << fmt(st.pre_mean_us) << " us, pre max "
      << fmt(st.pre_max_us) << " us, post |t_d| p99 " << fmt(st.post_abs_p99_ns) << " ns\n";
  out << "outputs in " << dir.string() << '\n';
  return kOk;
}

int cmd_sync(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> trials_opt,
             const std::string& out_dir, std::ostream& out) {
  auto cfg = config::load(path);
  if (seed) cfg.scenario.seed = *seed;
  const int trials = trials_opt.value_or(cfg.scenario.sync_trials);
  const auto samples = sim::run_sync_trial(cfg.scenario, trials);
  if (!out_dir.empty()) write_sync(prepare_dir(out_dir) / "sync_errors.csv", samples, {});
  out << "node  pre_mean_us  pre_max_us  post_sd_ns  post_abs_p99_ns\n";
  for (int node = 2; node <= cfg.scenario.nodes(); ++node) {
    std::vector<sim::SyncSample> mine;
    std::copy_if(samples.begin(), samples.end(), std::back_inserter(mine),
                 [&](const auto& x) { return x.node == node; });
    const auto st = sync_stats(mine);
    out << std::setw(4) << node << "  " << fmt(st.pre_mean_us) << "  " << fmt(st.pre_max_us) << "  "
        << fmt(st.post_sd_ns) << "  " << fmt(st.post_abs_p99_ns) << '\n';
  }
  return kOk;
}

int cmd_sweep(const std::string& path, const std::string& param, const std::string& values_list,
              const RunOptions& opt, std::ostream& out, std::ostream& err) {
  const auto values = split_values(values_list);
  if (values.empty()) throw UsageError("--values needs at least one value");
  if (!config::known_key(param) || param == "out_dir" || param == "trace") {
    throw UsageError("unknown sweep parameter '" + param + "'");
  }
  std::ifstream in(path);
  if (!in) throw config::ConfigError(path, 0, "", "cannot read file");
  std::ostringstream text;
  text << in.rdbuf();
  auto base = config::parse_document(text.str(), path);
  config::apply_environment(base, config::process_environment());

  std::vector<config::Config> configs;
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto doc = base;
    doc.set(param, values[k], "sweep");
    configs.push_back(config::build(doc));
    auto& s = configs.back().scenario;
    const std::uint64_t root = opt.seed.value_or(s.seed);
    s.seed = splitmix64(root + k);
    s.trace = false;
    const auto bad = s.violations();
    if (!bad.empty() && !opt.force) {
      err << param << " = " << values[k] << ": schedule is not admissible (use --force to run anyway)\n";
      print_constraints(err, bad);
      return kConstraintFailure;
    }
  }

  std::vector<std::future<sim::RunMetrics>> jobs;
  for (const auto& c : configs) {
    jobs.push_back(std::async(std::launch::async, [&c] { return sim::run(c.scenario, true); }));
  }

  const auto dir = prepare_dir(opt.out.empty() ? configs.front().out_dir : opt.out);
  auto f = open_output(dir / "sweep.csv");
  f << "param,value,seed,node,metric,metric_value\n";
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto& s = configs[k].scenario;
    const auto m = jobs[k].get();
    const std::string prefix = param + "," + values[k] + "," + std::to_string(s.seed) + ",";
    auto row = [&](int node, const std::string& metric, const std::string& v) {
      f << prefix << node << ',' << metric << ',' << v << '\n';
    };
    for (int node = 1; node <= m.nodes; ++node) {
      row(node, "frame_receive_num", std::to_string(m.frame_receive_num(node)));
      row(node, "frame_correct_num", std::to_string(m.frame_correct_num(node)));
      row(node, "ber", fmt(m.effective_ber(node, s.frames_per_node, s.payload_bits)));
      row(node, "goodput_bps", fmt(m.goodput_bps(node, s.payload_bits)));
    }
    row(0, "overlap_events", std::to_string(m.overlap_events));
    row(0, "periods_run", std::to_string(m.periods_run));
    row(0, "frames_transmitted", std::to_string(m.frames_transmitted_total()));
    row(0, "beacons_missed", std::to_string(m.beacons_missed));
    out << param << " = " << values[k] << ": overlap events " << m.overlap_events << ", frames correct";
    for (int node = 1; node <= m.nodes; ++node) out << ' ' << m.frame_correct_num(node);
    out << '\n';
  }
  out << "wrote " << (dir / "sweep.csv").string() << '\n';
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Beacon-synchronized TDMA ultraviolet network simulator", "uvnet"};
  app.require_subcommand(1);

  std::string config_path;
  RunOptions opt;
  std::uint64_t seed = 0;
  std::string param;
  std::string values;
  int trials = 0;

  auto* validate = app.add_subcommand("validate", "Check slot-table admissibility constraints");
  validate->add_option("config", config_path, "Scenario config")->required();

  auto* run = app.add_subcommand("run", "Simulate the scenario and write CSV metrics");
  run->add_option("config", config_path, "Scenario config")->required();
  auto* run_seed = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_flag("--trace", opt.trace, "Write trace.csv");
  run->add_option("--out", opt.out, "Output directory");
  run->add_flag("--force", opt.force, "Run even if constraints fail");

  auto* sweep = app.add_subcommand("sweep", "Run once per value of one config key");
  sweep->add_option("config", config_path, "Scenario config")->required();
  sweep->add_option("--param", param, "Config key to vary")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  auto* sweep_seed = sweep->add_option("--seed", seed, "Root seed for derived per-run seeds");
  sweep->add_option("--out", opt.out, "Output directory");
  sweep->add_flag("--force", opt.force, "Run even if constraints fail");

  auto* sync = app.add_subcommand("sync", "Beacon-round sync-error trials only");
  sync->add_option("config", config_path, "Scenario config")->required();
  auto* sync_seed = sync->add_option("--seed", seed, "Override the scenario seed");
  auto* sync_trials = sync->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
  sync->add_option("--out", opt.out, "Output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << "run with --help for usage\n";
    return kUsageError;
  }

  try {
    if (validate->parsed()) return cmd_validate(config_path, out);
    if (run->parsed()) {
      if (run_seed->count()) opt.seed = seed;
      return cmd_run(config_path, opt, out, err);
    }
    if (sweep->parsed()) {
      if (sweep_seed->count()) opt.seed = seed;
      return cmd_sweep(config_path, param, values, opt, out, err);
    }
    if (sync->parsed()) {
      std::optional<std::uint64_t> s;
      if (sync_seed->count()) s = seed;
      std::optional<int> t;
      if (sync_trials->count()) t = trials;
      return cmd_sync(config_path, s, t, opt.out, out);
    }
  } catch (const config::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const sim::ScenarioError& e) {
    err << "scenario error: " << e.what() << '\n';
    return kUsageError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace uvnet::cli
