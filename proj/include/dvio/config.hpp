#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dvio {

/// Flat `key = value` configuration. Keys may repeat (waypoint lists use
/// repeated `wp` entries); insertion order of repeats is preserved.
/// Lookup by key returns the last occurrence so command-line overrides win
/// by appending.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  void append(const std::string& key, const std::string& value);
  /// Removes all occurrences of key, then appends.
  void override_key(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::string require(const std::string& key) const;
  double require_double(const std::string& key) const;

  /// Merge: entries of other are appended (so other wins on lookup).
  void merge_from(const Config& other);

  /// Canonical text form: non-repeating keys sorted, repeated keys grouped
  /// in first-seen order. Parsing the output reproduces the config.
  std::string to_string() const;
  void write_file(const std::string& path) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace dvio
