#include "vidctl/util/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace vidctl::util {

namespace {
std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.kv_.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + key);
    cfg.kv_[key] = value;
  }
  return cfg;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  touched_.insert(key);
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_str(const std::string& key) const {
  touched_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end() || it->second.empty())
    throw ConfigError("missing required config key: " + key);
  return it->second;
}

double Config::get_num(const std::string& key, double fallback) const {
  touched_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key " + key + ": not a number: " + it->second);
  return v;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  touched_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key " + key + ": not an integer: " + it->second);
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  touched_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": not a boolean: " + v);
}

void Config::set_num(const std::string& key, double value) {
  std::ostringstream ss;
  ss.precision(17);
  ss << value;
  kv_[key] = ss.str();
}

void Config::set_int(const std::string& key, int64_t value) { kv_[key] = std::to_string(value); }

std::vector<std::string> Config::unknown_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_)
    if (!touched_.count(k)) out.push_back(k);
  return out;
}

void Config::reject_unknown() const {
  const auto unknown = unknown_keys();
  if (unknown.empty()) return;
  std::string msg = "unknown config keys:";
  for (const auto& k : unknown) msg += " " + k;
  throw ConfigError(msg);
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write config file: " + path);
  f << serialize();
}

void Validator::throw_if_failed() const {
  if (errors_.empty()) return;
  std::string msg = "configuration invalid:";
  for (const auto& e : errors_) msg += "\n  - " + e;
  throw ConfigError(msg);
}

}  // namespace vidctl::util
