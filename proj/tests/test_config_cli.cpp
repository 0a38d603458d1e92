#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "support.hpp"
#include "uvnet/cli.hpp"
#include "uvnet/config.hpp"

using namespace uvnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "uvnet");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("uvnet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

// Config text with some keys replaced or removed (empty value removes).
fs::path variant(const std::string& name, const std::map<std::string, std::string>& edits) {
  std::istringstream in(slurp(testsupport::config_path("paper_default.cfg")));
  std::ostringstream out;
  std::set<std::string> used;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line[0] != '#') {
      std::string key = line.substr(0, eq);
      key.erase(key.find_last_not_of(' ') + 1);
      if (const auto it = edits.find(key); it != edits.end()) {
        used.insert(key);
        if (!it->second.empty()) out << key << " = " << it->second << '\n';
        continue;
      }
    }
    out << line << '\n';
  }
  for (const auto& [k, v] : edits) {
    if (!used.contains(k) && !v.empty()) out << k << " = " << v << '\n';
  }
  const auto path = scratch(name) / "scenario.cfg";
  std::ofstream(path) << out.str();
  return path;
}

struct EnvGuard {
  std::vector<std::string> names;
  void set(const std::string& k, const std::string& v) {
    setenv(k.c_str(), v.c_str(), 1);
    names.push_back(k);
  }
  ~EnvGuard() {
    for (const auto& n : names) unsetenv(n.c_str());
  }
};

std::map<int, std::map<std::string, std::string>> read_metrics(const fs::path& p) {
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  std::stringstream hs(header);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  std::map<int, std::map<std::string, std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::stringstream ls(line);
    std::map<std::string, std::string> row;
    std::size_t k = 0;
    for (std::string c; std::getline(ls, c, ',');) row[cols.at(k++)] = c;
    rows[std::stoi(row["node"])] = row;
  }
  return rows;
}

}  // namespace

TEST_CASE("parser diagnostics") {
  using config::ConfigError;
  CHECK_THROWS_AS(config::parse_document("nodes = 4\nbogus_key = 3\n", "t.cfg"), ConfigError);
  try {
    config::parse_document("nodes = 4\n\n# c\nbogus_key = 3\n", "t.cfg");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
    CHECK(e.key() == "bogus_key");
    CHECK(std::string(e.what()).find("t.cfg:4") != std::string::npos);
  }
  CHECK_THROWS_AS(config::parse_document("nodes = 4\nnodes = 5\n", "t.cfg"), ConfigError);
  CHECK_THROWS_AS(config::parse_document("nodes 4\n", "t.cfg"), ConfigError);
  CHECK_THROWS_AS(config::parse_document("nodes =\n", "t.cfg"), ConfigError);
  CHECK_NOTHROW(config::parse_document("fault = drop_beacon:1\nfault = drop_beacon:2 # twice\n", "t.cfg"));
  CHECK(config::known_key("link_gain.1.2"));
  CHECK(config::known_key("position_m.12"));
  CHECK_FALSE(config::known_key("position_m"));
  CHECK_FALSE(config::known_key("t_clock_s"));
}

TEST_CASE("paper_default builds the calibrated scenario") {
  const auto cfg = testsupport::load_config("paper_default.cfg");
  const auto& s = cfg.scenario;
  CHECK(s.nodes() == 4);
  CHECK(s.table.period_symbols() == 2'000'000);
  CHECK(s.table.ticks_per_symbol == 50);
  CHECK(s.clock.ticks_per_period == 100'000'000);
  CHECK(s.t_trans() == doctest::Approx(128e-6).epsilon(1e-15));
  CHECK(s.c_initial_ticks() == 13300);
  CHECK(s.processing.mean() == doctest::Approx(4.466915e-6).epsilon(1e-12));
  CHECK(s.processing.sd() == doctest::Approx(std::sqrt(0.015) * 1e-6).epsilon(1e-5));
  CHECK(s.violations().empty());
}

TEST_CASE("build errors carry the key") {
  auto doc = config::parse_document(slurp(testsupport::config_path("paper_default.cfg")), "p");
  SUBCASE("bad integer") {
    doc.set("info_symbols", "12x", "t");
    CHECK_THROWS_WITH_AS(config::build(doc), doctest::Contains("info_symbols"), config::ConfigError);
  }
  SUBCASE("symbol not a whole number of ticks") {
    doc.set("symbol_rate_sps", "3000000", "t");
    CHECK_THROWS_AS(config::build(doc), config::ConfigError);
  }
  SUBCASE("missing position") {
    doc.entries.erase("position_m.3");
    CHECK_THROWS_WITH_AS(config::build(doc), doctest::Contains("position_m.3"), config::ConfigError);
  }
  SUBCASE("bad enum") {
    doc.set("combining", "maximal", "t");
    CHECK_THROWS_AS(config::build(doc), config::ConfigError);
  }
  SUBCASE("bad fault") {
    doc.set("fault", "drop_beacon:zero", "t");
    CHECK_THROWS_AS(config::build(doc), config::ConfigError);
  }
}

TEST_CASE("environment overrides") {
  auto doc = config::parse_document(slurp(testsupport::config_path("paper_default.cfg")), "p");
  config::apply_environment(doc, {{"UVNET_SEED", "77"},
                                  {"UVNET_LINK_GAIN_1_2", "0.5"},
                                  {"UVNET_FAULT", "drop_beacon:2"},
                                  {"HOME", "/root"}});
  const auto cfg = config::build(doc);
  CHECK(cfg.scenario.seed == 77);
  CHECK(cfg.scenario.gain(1, 2) == 0.5);
  CHECK(cfg.scenario.faults.size() == 1);
  CHECK_THROWS_AS(config::apply_environment(doc, {{"UVNET_WARP_FACTOR", "9"}}), config::ConfigError);
}

TEST_CASE("validate exit codes") {
  const auto ok = invoke({"validate", testsupport::config_path("paper_default.cfg")});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(ok.out.find("guard_interval") != std::string::npos);

  const auto no_guard = invoke({"validate", variant("noguard", {{"guard_symbols", "0"}}).string()});
  CHECK(no_guard.code == 1);
  CHECK(no_guard.out.find("FAIL guard_interval") != std::string::npos);

  const auto missing = invoke({"validate", variant("missing", {{"info_symbols", ""}}).string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("info_symbols") != std::string::npos);

  CHECK(invoke({"validate", "/nonexistent/x.cfg"}).code == 2);
  CHECK(invoke({"validate"}).code == 2);
  CHECK(invoke({"launch"}).code == 2);
  CHECK(invoke({}).code == 2);
}

TEST_CASE("run writes stable CSVs") {
  EnvGuard env;
  env.set("UVNET_FRAMES_PER_NODE", "130");
  env.set("UVNET_SYNC_TRIALS", "20");
  const auto dir = scratch("run");
  const auto a = invoke({"run", testsupport::config_path("paper_default.cfg"), "--seed", "5", "--out",
                      (dir / "a").string(), "--trace"});
  REQUIRE(a.code == 0);
  const auto b = invoke({"run", testsupport::config_path("paper_default.cfg"), "--seed", "5", "--out",
                      (dir / "b").string(), "--trace"});
  REQUIRE(b.code == 0);
  for (const char* f : {"metrics.csv", "sync_errors.csv", "trace.csv", "summary.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(first_line(dir / "a" / "metrics.csv") ==
        "node,frames_addressed,frame_receive_num,frame_correct_num,ber,goodput_bps,frames_sent,dropped_unsynced");
  CHECK(first_line(dir / "a" / "sync_errors.csv") == "trial,node,source,pre_ns,post_ns");
  CHECK(first_line(dir / "a" / "trace.csv") == "time_ticks,time_ns,node,event,detail");
  CHECK(first_line(dir / "a" / "summary.csv") == "metric,value");

  const auto rows = read_metrics(dir / "a" / "metrics.csv");
  REQUIRE(rows.size() == 4);
  for (const auto& [node, row] : rows) {
    CHECK(row.at("frames_addressed") == "390");
    CHECK(row.at("frame_correct_num") == row.at("frames_addressed"));
    CHECK(row.at("frame_receive_num") == row.at("frames_addressed"));
  }
}

TEST_CASE("run without signal") {
  EnvGuard env;
  env.set("UVNET_LAMBDA_S", "0");
  env.set("UVNET_FRAMES_PER_NODE", "20");
  const auto dir = scratch("dark");
  const auto r = invoke({"run", testsupport::config_path("lab.cfg"), "--out", dir.string()});
  REQUIRE(r.code == 0);
  for (const auto& [node, row] : read_metrics(dir / "metrics.csv")) {
    CHECK(row.at("frame_correct_num") == "0");
    CHECK(std::stod(row.at("ber")) == doctest::Approx(0.5).epsilon(0.05));
  }
}

TEST_CASE("run refusals") {
  const auto path = variant("refuse", {{"guard_symbols", "0"}});
  const auto dir = scratch("refuse_out");
  CHECK(invoke({"run", path.string(), "--out", dir.string()}).code == 1);

  const auto blocker = scratch("blocked") / "file";
  std::ofstream(blocker) << "x";
  CHECK(invoke({"run", testsupport::config_path("lab.cfg"), "--out", (blocker / "sub").string()}).code == 2);

  EnvGuard env;
  env.set("UVNET_NOT_A_KEY", "1");
  CHECK(invoke({"run", testsupport::config_path("lab.cfg"), "--out", dir.string()}).code == 2);
}

TEST_CASE("sweep guard length under a clock offset") {
  EnvGuard env;
  env.set("UVNET_FRAMES_PER_NODE", "20");
  env.set("UVNET_FAULT", "offset_clock:2:1000");
  const auto dir = scratch("sweep_guard");
  const auto r = invoke({"sweep", testsupport::config_path("paper_default.cfg"), "--param", "guard_symbols", "--values",
                      "0,29124", "--force", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(dir / "sweep.csv") == "param,value,seed,node,metric,metric_value");
  std::ifstream in(dir / "sweep.csv");
  std::map<std::string, long> overlaps;
  for (std::string line; std::getline(in, line);) {
    if (line.find(",overlap_events,") == std::string::npos) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    overlaps[cols[1]] = std::stol(cols[5]);
  }
  CHECK(overlaps.at("0") > 0);
  CHECK(overlaps.at("29124") == 0);

  const auto refused = invoke({"sweep", testsupport::config_path("paper_default.cfg"), "--param", "guard_symbols",
                            "--values", "0,29124", "--out", dir.string()});
  CHECK(refused.code == 1);
}

TEST_CASE("sweep signal level") {
  EnvGuard env;
  env.set("UVNET_LAMBDA_B", "1");
  env.set("UVNET_FRAMES_PER_NODE", "100");
  const auto dir = scratch("sweep_lambda");
  const auto r = invoke({"sweep", testsupport::config_path("lab.cfg"), "--param", "lambda_s", "--values",
                      "2,4,6,8,12", "--out", dir.string()});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "sweep.csv");
  std::map<double, double> ber;  // mean over nodes
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (cols.size() == 6 && cols[4] == "ber") ber[std::stod(cols[1])] += std::stod(cols[5]) / 4;
  }
  REQUIRE(ber.size() == 5);
  double previous = 1.0;
  for (const auto& [lambda, b] : ber) {
    CAPTURE(lambda);
    CHECK(b <= previous);
    previous = b;
  }
}

TEST_CASE("sweep usage errors") {
  const auto cfgp = testsupport::config_path("lab.cfg");
  CHECK(invoke({"sweep", cfgp, "--param", "lambda_s", "--values", ""}).code == 2);
  CHECK(invoke({"sweep", cfgp, "--param", "lambda_s", "--values", " , "}).code == 2);
  CHECK(invoke({"sweep", cfgp, "--param", "warp", "--values", "1,2"}).code == 2);
  CHECK(invoke({"sweep", cfgp, "--values", "1,2"}).code == 2);
}

TEST_CASE("sync subcommand") {
  const auto dir = scratch("sync");
  const auto r = invoke({"sync", testsupport::config_path("lab.cfg"), "--trials", "200", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(first_line(dir / "sync_errors.csv") == "trial,node,source,pre_ns,post_ns");
  CHECK(invoke({"sync", testsupport::config_path("lab.cfg"), "--trials", "0"}).code == 2);
}
