#include "dvio/config.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dvio/util.hpp"

namespace dvio {

Config Config::from_file(const std::string& path) { return from_string(read_text_file(path)); }

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::MalformedData, "config line " + std::to_string(lineno) + ": missing '='");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorKind::MalformedData, "config line " + std::to_string(lineno) + ": empty key");
    cfg.entries_.emplace_back(key, value);
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) { override_key(key, value); }

void Config::append(const std::string& key, const std::string& value) {
  entries_.emplace_back(key, value);
}

void Config::override_key(const std::string& key, const std::string& value) {
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [&](const auto& kv) { return kv.first == key; }),
                 entries_.end());
  entries_.emplace_back(key, value);
}

bool Config::has(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> Config::get(const std::string& key) const {
  std::optional<std::string> out;
  for (const auto& [k, v] : entries_)
    if (k == key) out = v;
  return out;
}

std::vector<std::string> Config::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (k == key) out.push_back(v);
  return out;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto v = get(key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    double d = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidArgument, "config key '" + key + "': not a number: " + *v);
  }
}

long Config::get_int(const std::string& key, long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    long n = std::stol(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return n;
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidArgument, "config key '" + key + "': not an integer: " + *v);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  fail(ErrorKind::InvalidArgument, "config key '" + key + "': not a boolean: " + *v);
}

std::string Config::require(const std::string& key) const {
  auto v = get(key);
  if (!v) fail(ErrorKind::InvalidArgument, "missing required config key '" + key + "'");
  return *v;
}

double Config::require_double(const std::string& key) const {
  require(key);
  return get_double(key, 0.0);
}

void Config::merge_from(const Config& other) {
  for (const auto& [k, v] : other.entries_) entries_.emplace_back(k, v);
}

std::string Config::to_string() const {
  // Single-valued keys sorted for stable diffs; repeated keys keep order.
  std::map<std::string, std::vector<std::string>> grouped;
  std::vector<std::string> order;
  for (const auto& [k, v] : entries_) {
    if (!grouped.count(k)) order.push_back(k);
    grouped[k].push_back(v);
  }
  std::vector<std::string> single, repeated;
  for (const auto& k : order)
    (grouped[k].size() == 1 ? single : repeated).push_back(k);
  std::sort(single.begin(), single.end());

  std::ostringstream out;
  for (const auto& k : single) out << k << " = " << grouped[k].front() << "\n";
  for (const auto& k : repeated)
    for (const auto& v : grouped[k]) out << k << " = " << v << "\n";
  return out.str();
}

void Config::write_file(const std::string& path) const { write_text_file(path, to_string()); }

}  // namespace dvio
