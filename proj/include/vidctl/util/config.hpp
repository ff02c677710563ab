#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidctl::util {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key = value run configuration. Lines are `key = value`, `#` starts a
// comment, keys are dotted lowercase. Every getter records the key it was
// asked for; after a command has pulled its full schema, reject_unknown()
// fails on any key the file defined but nobody consumed.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  double get_num(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_num(const std::string& key, double value);
  void set_int(const std::string& key, int64_t value);

  // Keys present in the file that no getter ever touched.
  std::vector<std::string> unknown_keys() const;
  void reject_unknown() const;

  std::string serialize() const;
  void save(const std::string& path) const;

 private:
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> touched_;
};

// Collects validation failures so a command can report every problem at once.
class Validator {
 public:
  void fail(const std::string& msg) { errors_.push_back(msg); }
  void require(bool ok, const std::string& msg) {
    if (!ok) errors_.push_back(msg);
  }
  bool ok() const { return errors_.empty(); }
  const std::vector<std::string>& errors() const { return errors_; }
  // Throws ConfigError listing every recorded failure.
  void throw_if_failed() const;

 private:
  std::vector<std::string> errors_;
};

}  // namespace vidctl::util
