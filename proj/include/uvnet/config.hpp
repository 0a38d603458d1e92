#pragma once

// Plain-text scenario configuration: one `key = value` per line, `#` starts a
// comment. Physical quantities carry their unit in the key name and every
// duration is an integer.

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uvnet/sim.hpp"

namespace uvnet::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& message);
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct Entry {
  std::string value;
  int line = 0;  ///< 0 for values that did not come from the file
  std::string origin;
};

/// Raw key/value document. `fault` may repeat; every other key is unique.
struct Document {
  std::string source;
  std::map<std::string, std::vector<Entry>> entries;

  bool has(const std::string& key) const { return entries.contains(key); }
  /// Replaces every value of `key`.
  void set(const std::string& key, const std::string& value, const std::string& origin);
};

struct Config {
  Document doc;
  sim::Scenario scenario;
  std::string out_dir = "out";
};

/// True for keys the scenario understands, including indexed forms such as
/// position_m.3 or link_gain.1.2.
bool known_key(const std::string& key);
std::vector<std::string> scalar_keys();

Document parse_document(const std::string& text, const std::string& source);
/// Applies UVNET_<KEY> overrides. Dots in indexed keys become underscores,
/// e.g. UVNET_LINK_GAIN_1_2 sets link_gain.1.2.
void apply_environment(Document& doc, const std::vector<std::pair<std::string, std::string>>& environment);
std::vector<std::pair<std::string, std::string>> process_environment();

Config build(const Document& doc);
/// Reads, applies the process environment, builds.
Config load(const std::string& path);

}  // namespace uvnet::config
