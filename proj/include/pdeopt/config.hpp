#pragma once

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pdeopt/errors.hpp"

namespace pdeopt::config {

/// Flat key/value file with [section] headers (a TOML subset). Values are
/// quoted strings, true/false, or numbers; '#' starts a comment. Keys are
/// addressed as "section.key" (top-level keys have no prefix).
class Document {
public:
  using Value = std::variant<std::string, bool, double>;

  static Document parse(std::istream& in) {
    Document doc;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = strip(strip_comment(line));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("", "line " + std::to_string(lineno) + ": malformed section header");
        section = strip(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = strip(line.substr(0, eq));
      if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (doc.values_.count(full)) throw ConfigError(full, "duplicate key");
      doc.values_[full] = parse_value(full, strip(line.substr(eq + 1)));
      doc.order_.push_back(full);
    }
    return doc;
  }

  static Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    return parse(in);
  }

  static Document parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const Value* v = find(key);
    if (!v) return fallback;
    if (auto s = std::get_if<std::string>(v)) return *s;
    throw ConfigError(key, "expected a quoted string");
  }

  /// Required string.
  std::string get_string(const std::string& key) {
    if (!has(key)) throw ConfigError(key, "missing required key");
    return get_string(key, "");
  }

  double get_double(const std::string& key, double fallback) {
    const Value* v = find(key);
    if (!v) return fallback;
    if (auto d = std::get_if<double>(v)) return *d;
    throw ConfigError(key, "expected a number");
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) {
    const Value* v = find(key);
    if (!v) return fallback;
    const double* d = std::get_if<double>(v);
    if (!d || *d < 0 || std::floor(*d) != *d) throw ConfigError(key, "expected a nonnegative integer");
    return static_cast<std::size_t>(*d);
  }

  bool get_bool(const std::string& key, bool fallback) {
    const Value* v = find(key);
    if (!v) return fallback;
    if (auto b = std::get_if<bool>(v)) return *b;
    throw ConfigError(key, "expected true or false");
  }

  /// String restricted to `choices`.
  std::string get_choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& choices) {
    const std::string s = get_string(key, fallback);
    for (const auto& c : choices)
      if (c == s) return s;
    std::string list;
    for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
    throw ConfigError(key, "invalid value '" + s + "' (valid: " + list + ")");
  }

  /// Throws ConfigError naming the first key (in file order) that nothing read.
  void reject_unused() const {
    for (const auto& k : order_)
      if (!used_.count(k)) throw ConfigError(k, "unknown key");
  }

private:
  const Value* find(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static Value parse_value(const std::string& key, const std::string& text) {
    if (text.empty()) throw ConfigError(key, "missing value");
    if (text.front() == '"') {
      if (text.size() < 2 || text.back() != '"') throw ConfigError(key, "unterminated string");
      return text.substr(1, text.size() - 2);
    }
    if (text == "true") return true;
    if (text == "false") return false;
    errno = 0;
    char* end = nullptr;
    const double d = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(d))
      throw ConfigError(key, "cannot parse value '" + text + "'");
    return d;
  }

  std::map<std::string, Value> values_;
  std::vector<std::string> order_;
  std::set<std::string> used_;
};

}  // namespace pdeopt::config
