#include "uvnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

extern char** environ;

namespace uvnet::config {

namespace {

const std::vector<std::string> kScalarKeys = {
    "nodes",
    "symbol_rate_sps",
    "t_clock_ps",
    "period_ns",
    "beacon_bits",
    "lfsr_degree",
    "lfsr_taps",
    "chips_per_symbol",
    "detect_threshold_ratio",
    "beacon_tx_symbols",
    "beacon_interval_symbols",
    "info_symbols",
    "guard_symbols",
    "t_ps_family",
    "t_ps_mean_ps",
    "t_ps_sd_ps",
    "t_ps_min_ps",
    "t_ps_max_ps",
    "t_ps_tilde_ps",
    "td_bound_ps",
    "lambda_s",
    "lambda_b",
    "receivers_per_node",
    "combining",
    "off_axis_gain",
    "channel_estimation",
    "preamble_symbols",
    "frames_per_node",
    "payload_bits",
    "max_periods",
    "sync_trials",
    "seed",
    "fault",
    "trace",
    "out_dir",
};

const std::vector<std::string> kRequired = {
    "nodes",         "symbol_rate_sps", "beacon_tx_symbols", "beacon_interval_symbols",
    "info_symbols",  "guard_symbols",   "lambda_s",          "lambda_b",
};

const std::regex kIndexed(R"((position_m)\.([0-9]+)|(link_gain|receiver_gain)\.([0-9]+)\.([0-9]+))");

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Reader {
 public:
  explicit Reader(const Document& doc) : doc_(doc) {}

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    const auto it = doc_.entries.find(key);
    const int line = it == doc_.entries.end() || it->second.empty() ? 0 : it->second.front().line;
    throw ConfigError(doc_.source, line, key, message);
  }

  const Entry* find(const std::string& key) const {
    const auto it = doc_.entries.find(key);
    return it == doc_.entries.end() || it->second.empty() ? nullptr : &it->second.front();
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) const {
    const Entry* e = find(key);
    if (!e) {
      if (fallback) return *fallback;
      fail(key, "missing required key");
    }
    try {
      std::size_t used = 0;
      const auto v = std::stoll(e->value, &used, 0);
      if (used == e->value.size()) return v;
    } catch (const std::exception&) {
    }
    fail(key, "expected an integer, got '" + e->value + "'");
  }

  double real(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    const Entry* e = find(key);
    if (!e) {
      if (fallback) return *fallback;
      fail(key, "missing required key");
    }
    try {
      std::size_t used = 0;
      const auto v = std::stod(e->value, &used);
      if (used == e->value.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    fail(key, "expected a finite number, got '" + e->value + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
  }

  bool flag(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
    if (e->value == "false" || e->value == "0" || e->value == "no") return false;
    fail(key, "expected true or false, got '" + e->value + "'");
  }

  std::int64_t positive(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) const {
    const auto v = integer(key, fallback);
    if (v <= 0) fail(key, "must be positive");
    return v;
  }

  std::int64_t nonnegative(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) const {
    const auto v = integer(key, fallback);
    if (v < 0) fail(key, "must be nonnegative");
    return v;
  }

 private:
  const Document& doc_;
};

std::pair<double, double> parse_position(const Reader& r, const std::string& key, const std::string& value) {
  const auto comma = value.find(',');
  if (comma == std::string::npos) r.fail(key, "expected 'x, y'");
  try {
    std::size_t ux = 0, uy = 0;
    const std::string xs = trim(value.substr(0, comma));
    const std::string ys = trim(value.substr(comma + 1));
    const double x = std::stod(xs, &ux);
    const double y = std::stod(ys, &uy);
    if (ux == xs.size() && uy == ys.size() && std::isfinite(x) && std::isfinite(y)) return {x, y};
  } catch (const std::exception&) {
  }
  r.fail(key, "expected 'x, y', got '" + value + "'");
}

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& key, const std::string& message)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (key.empty() ? std::string() : ": key '" + key + "'") + ": " + message),
      line_(line),
      key_(key) {}

void Document::set(const std::string& key, const std::string& value, const std::string& origin) {
  entries[key] = {Entry{value, 0, origin}};
}

bool known_key(const std::string& key) {
  return std::find(kScalarKeys.begin(), kScalarKeys.end(), key) != kScalarKeys.end() ||
         std::regex_match(key, kIndexed);
}

std::vector<std::string> scalar_keys() { return kScalarKeys; }

Document parse_document(const std::string& text, const std::string& source) {
  Document doc;
  doc.source = source;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "", "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line, "", "empty key");
    if (!known_key(key)) throw ConfigError(source, line, key, "unknown key");
    if (value.empty()) throw ConfigError(source, line, key, "empty value");
    auto& slot = doc.entries[key];
    if (!slot.empty() && key != "fault") {
      throw ConfigError(source, line, key, "duplicate key (first set on line " + std::to_string(slot.front().line) + ")");
    }
    slot.push_back({value, line, source});
  }
  return doc;
}

void apply_environment(Document& doc, const std::vector<std::pair<std::string, std::string>>& environment) {
  static const std::string prefix = "UVNET_";
  for (const auto& [name, value] : environment) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string key = name.substr(prefix.size());
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!known_key(key)) {
      // Indexed keys: trailing _<digits> groups are dots.
      static const std::regex indexed_env(R"((position_m|link_gain|receiver_gain)((?:_[0-9]+)+))");
      std::smatch m;
      if (std::regex_match(key, m, indexed_env)) {
        std::string rest = m[2];
        std::replace(rest.begin(), rest.end(), '_', '.');
        key = std::string(m[1]) + rest;
      }
    }
    if (!known_key(key)) throw ConfigError("environment", 0, name, "unknown key");
    if (key == "fault") {
      doc.entries[key].push_back({value, 0, "environment"});
    } else {
      doc.set(key, value, "environment");
    }
  }
}

std::vector<std::pair<std::string, std::string>> process_environment() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq != std::string::npos) out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Config build(const Document& doc) {
  Reader r(doc);
  for (const auto& key : kRequired) {
    if (!r.find(key)) throw ConfigError(doc.source, 0, key, "missing required key");
  }

  Config cfg;
  cfg.doc = doc;
  sim::Scenario& s = cfg.scenario;

  const auto n = r.integer("nodes");
  if (n < 2 || n > 64) r.fail("nodes", "must be between 2 and 64");
  const int nodes = static_cast<int>(n);

  s.positions_m.assign(static_cast<std::size_t>(nodes), {0.0, 0.0});
  std::set<int> placed;
  for (const auto& [key, values] : doc.entries) {
    std::smatch m;
    if (!std::regex_match(key, m, kIndexed)) continue;
    const std::string& value = values.front().value;
    if (m[1].matched) {
      const int id = std::stoi(m[2]);
      if (id < 1 || id > nodes) r.fail(key, "node id out of range");
      s.positions_m[static_cast<std::size_t>(id - 1)] = parse_position(r, key, value);
      placed.insert(id);
      continue;
    }
    const int a = std::stoi(m[4]);
    const int b = std::stoi(m[5]);
    const double g = r.real(key);
    if (g < 0.0) r.fail(key, "gain must be nonnegative");
    if (m[3] == "link_gain") {
      if (a < 1 || a > nodes || b < 1 || b > nodes || a == b) r.fail(key, "expects two distinct node ids");
      s.link_gain[{a, b}] = g;
    } else {
      if (a < 1 || a > nodes || b < 1) r.fail(key, "expects a node id and a receiver id");
      s.receiver_gain[{a, b}] = g;
    }
  }
  for (int id = 1; id <= nodes; ++id) {
    if (!placed.contains(id)) throw ConfigError(doc.source, 0, "position_m." + std::to_string(id), "missing required key");
  }

  const auto tick_ps = r.positive("t_clock_ps", 10'000);
  const auto rate = r.positive("symbol_rate_sps");
  // Symbol duration in ps must be a whole number of ticks.
  constexpr std::int64_t kPsPerSecond = 1'000'000'000'000;
  if (kPsPerSecond % rate != 0 || (kPsPerSecond / rate) % tick_ps != 0) {
    r.fail("symbol_rate_sps", "symbol duration is not an integer number of clock ticks");
  }

  s.table.nodes = nodes;
  s.table.beacon_tx = r.positive("beacon_tx_symbols");
  s.table.beacon_interval = r.positive("beacon_interval_symbols");
  s.table.info = r.positive("info_symbols");
  s.table.guard = r.nonnegative("guard_symbols");
  s.table.ticks_per_symbol = kPsPerSecond / rate / tick_ps;

  if (r.find("period_ns")) {
    const auto period_ns = r.positive("period_ns");
    if (period_ns > std::numeric_limits<std::int64_t>::max() / 1000) r.fail("period_ns", "too large");
    try {
      s.clock = timing::ClockConfig::from_period(tick_ps, period_ns * 1000);
    } catch (const timing::ConfigError& e) {
      r.fail("period_ns", e.what());
    }
  } else {
    s.clock = {tick_ps, s.table.period_ticks()};
  }

  s.beacon_bits = r.positive("beacon_bits", 256);
  s.lfsr_degree = static_cast<int>(r.positive("lfsr_degree", 8));
  if (s.lfsr_degree > 31) r.fail("lfsr_degree", "must be at most 31");
  const auto taps = r.positive("lfsr_taps", beacon::kDefaultTaps8);
  if (taps > 0xFFFFFFFFLL) r.fail("lfsr_taps", "does not fit 32 bits");
  s.lfsr_taps = static_cast<std::uint32_t>(taps);
  s.chips_per_symbol = static_cast<int>(r.positive("chips_per_symbol", 10));
  s.detect_threshold_ratio = r.real("detect_threshold_ratio", 0.5);
  if (!(s.detect_threshold_ratio > 0.0)) r.fail("detect_threshold_ratio", "must be positive");

  const std::string family = r.text("t_ps_family", "constant");
  auto ps = [&](const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) {
    return static_cast<double>(r.nonnegative(key, fallback)) * 1e-12;
  };
  try {
    switch (timing::parse_family(family)) {
      case timing::DelayFamily::Constant:
        s.processing = timing::DelayDistribution::constant(ps("t_ps_mean_ps", 0));
        break;
      case timing::DelayFamily::Uniform:
        s.processing = timing::DelayDistribution::uniform(ps("t_ps_min_ps"), ps("t_ps_max_ps"));
        break;
      case timing::DelayFamily::TruncatedNormal:
        s.processing = timing::DelayDistribution::truncated_normal(ps("t_ps_mean_ps"), ps("t_ps_sd_ps"),
                                                                   ps("t_ps_min_ps", 0), ps("t_ps_max_ps"));
        break;
    }
  } catch (const timing::ConfigError& e) {
    r.fail("t_ps_family", e.what());
  } catch (const std::domain_error& e) {
    r.fail("t_ps_family", e.what());
  }
  s.t_ps_tilde = r.find("t_ps_tilde_ps") ? ps("t_ps_tilde_ps") : s.processing.mean();
  s.td_bound = ps("td_bound_ps", 50'000);

  s.means = {r.real("lambda_s"), r.real("lambda_b")};
  if (s.means.lambda_s < 0.0) r.fail("lambda_s", "must be nonnegative");
  if (s.means.lambda_b < 0.0) r.fail("lambda_b", "must be nonnegative");

  s.receivers_per_node = static_cast<int>(r.positive("receivers_per_node", 3));
  const std::string combining = r.text("combining", "facing");
  if (combining == "facing") {
    s.combining = sim::Combining::Facing;
  } else if (combining == "selection") {
    s.combining = sim::Combining::Selection;
  } else {
    r.fail("combining", "expected facing or selection");
  }
  s.off_axis_gain = r.real("off_axis_gain", 0.0);
  if (s.off_axis_gain < 0.0) r.fail("off_axis_gain", "must be nonnegative");
  const std::string estimation = r.text("channel_estimation", "preamble");
  if (estimation == "preamble") {
    s.estimation = sim::Estimation::Preamble;
  } else if (estimation == "genie") {
    s.estimation = sim::Estimation::Genie;
  } else {
    r.fail("channel_estimation", "expected preamble or genie");
  }
  s.preamble_symbols = static_cast<int>(r.positive("preamble_symbols", 64));
  s.frames_per_node = r.nonnegative("frames_per_node", 10'000);
  s.payload_bits = static_cast<int>(r.positive("payload_bits", 1024));
  s.max_periods = static_cast<int>(r.nonnegative("max_periods", 0));
  s.sync_trials = static_cast<int>(r.positive("sync_trials", 100));
  s.seed = static_cast<std::uint64_t>(r.nonnegative("seed", 1));
  s.trace = r.flag("trace", false);
  cfg.out_dir = r.text("out_dir", "out");

  if (const auto it = doc.entries.find("fault"); it != doc.entries.end()) {
    for (const auto& e : it->second) {
      try {
        s.faults.push_back(sim::parse_fault(e.value));
      } catch (const sim::ScenarioError& err) {
        throw ConfigError(doc.source, e.line, "fault", err.what());
      }
    }
  }

  try {
    s.check_structure();
  } catch (const sim::ScenarioError& e) {
    throw ConfigError(doc.source, 0, "", e.what());
  }
  return cfg;
}

Config load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "", "cannot read file");
  std::ostringstream ss;
  ss << in.rdbuf();
  Document doc = parse_document(ss.str(), path);
  apply_environment(doc, process_environment());
  return build(doc);
}

}  // namespace uvnet::config
