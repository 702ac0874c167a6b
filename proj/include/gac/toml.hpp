#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

// Minimal TOML-subset reader for experiment configs.
//
// Supported grammar (a deliberate subset, enough for flat experiment files):
//   - [section] and [section.sub] headers; keys inside are addressed as
//     "section.sub.key"
//   - key = value with bare keys (letters, digits, '_', '-')
//   - values: "strings" (with \\, \", \n, \t escapes), integers, floats,
//     true/false, and homogeneous arrays of numbers or strings; arrays may
//     span lines until the closing bracket
//   - '#' comments (outside strings), blank lines
// Anything else is a parse error with a line number.

namespace gac::toml {

struct Value {
  enum class Type { string, number, boolean, number_array, string_array };
  Type type = Type::string;
  std::string str;
  double num = 0.0;
  bool boolean = false;
  bool integral = false; // number was written without '.', 'e', 'E'
  std::vector<double> nums;
  std::vector<std::string> strs;
  int line = 0;
};

class Document {
public:
  static Document parse_file(const std::string& path);
  static Document parse_string(const std::string& text,
                               const std::string& origin = "<string>");

  bool has(const std::string& path) const;

  // Typed getters; the non-defaulted forms throw std::runtime_error naming
  // the missing or mistyped path.
  std::string get_string(const std::string& path) const;
  std::string get_string(const std::string& path, const std::string& fallback) const;
  double get_number(const std::string& path) const;
  double get_number(const std::string& path, double fallback) const;
  std::int64_t get_integer(const std::string& path) const;
  std::int64_t get_integer(const std::string& path, std::int64_t fallback) const;
  bool get_bool(const std::string& path, bool fallback) const;
  std::vector<double> get_number_array(const std::string& path) const;
  std::vector<double> get_number_array(const std::string& path,
                                       const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_array(const std::string& path) const;

  /// All stored paths, sorted.
  std::vector<std::string> paths() const;
  /// Paths beginning with the given prefix (prefix itself excluded), sorted.
  std::vector<std::string> paths_with_prefix(const std::string& prefix) const;

  /// Canonical serialization: one "path=value" line per entry, paths sorted,
  /// numbers in %.17g. Semantically equal documents serialize identically.
  std::string canonical() const;
  std::uint64_t digest() const;

  const std::string& origin() const { return origin_; }

private:
  const Value* find(const std::string& path) const;
  const Value& require(const std::string& path, Value::Type t) const;

  std::map<std::string, Value> entries_;
  std::string origin_;
};

} // namespace gac::toml
