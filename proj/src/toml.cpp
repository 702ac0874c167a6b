#include "gac/toml.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gac/digest.hpp"

namespace gac::toml {

namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << msg;
  throw std::runtime_error(os.str());
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

// Remove a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_str = false;
      }
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum((unsigned char)c) && c != '_' && c != '-') return false;
  return true;
}

bool valid_section(const std::string& s) {
  if (s.empty()) return false;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = s.find('.', start);
    const std::string part = s.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!valid_key(part)) return false;
    if (dot == std::string::npos) return true;
    start = dot + 1;
  }
}

std::string parse_quoted(const std::string& origin, int line, const std::string& s,
                         std::size_t& pos) {
  std::string out;
  ++pos; // opening quote
  while (pos < s.size() && s[pos] != '"') {
    char c = s[pos];
    if (c == '\\') {
      ++pos;
      if (pos >= s.size()) fail(origin, line, "dangling escape in string");
      switch (s[pos]) {
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        default: fail(origin, line, "unsupported escape in string");
      }
    }
    out += c;
    ++pos;
  }
  if (pos >= s.size()) fail(origin, line, "unterminated string");
  ++pos; // closing quote
  return out;
}

bool parse_number(const std::string& text, double& out, bool& integral) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  // TOML floats/ints only; reject inf/nan/hex, which strtod would accept.
  for (char c : t)
    if (!std::isdigit((unsigned char)c) && c != '+' && c != '-' && c != '.' && c != 'e' &&
        c != 'E' && c != '_')
      return false;
  std::string clean;
  for (char c : t)
    if (c != '_') clean += c;
  char* end = nullptr;
  const double v = std::strtod(clean.c_str(), &end);
  if (end == nullptr || *end != '\0' || end == clean.c_str()) return false;
  out = v;
  integral = clean.find('.') == std::string::npos && clean.find('e') == std::string::npos &&
             clean.find('E') == std::string::npos;
  return true;
}

Value parse_scalar(const std::string& origin, int line, const std::string& text) {
  Value v;
  v.line = line;
  const std::string t = trim(text);
  if (t.empty()) fail(origin, line, "empty value");
  if (t.front() == '"') {
    std::size_t pos = 0;
    v.type = Value::Type::string;
    v.str = parse_quoted(origin, line, t, pos);
    if (trim(t.substr(pos)).size()) fail(origin, line, "trailing text after string");
    return v;
  }
  if (t == "true" || t == "false") {
    v.type = Value::Type::boolean;
    v.boolean = t == "true";
    return v;
  }
  if (parse_number(t, v.num, v.integral)) {
    v.type = Value::Type::number;
    return v;
  }
  fail(origin, line, "cannot parse value '" + t + "'");
}

Value parse_array(const std::string& origin, int line, const std::string& body) {
  Value v;
  v.line = line;
  // Split on commas outside strings.
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (in_str) {
      cur += c;
      if (c == '\\' && i + 1 < body.size()) {
        cur += body[++i];
      } else if (c == '"') {
        in_str = false;
      }
    } else if (c == '"') {
      in_str = true;
      cur += c;
    } else if (c == ',') {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_str) fail(origin, line, "unterminated string in array");
  if (!trim(cur).empty()) items.push_back(cur);

  if (items.empty()) {
    v.type = Value::Type::number_array;
    return v;
  }
  const bool first_is_string = trim(items.front()).front() == '"';
  v.type = first_is_string ? Value::Type::string_array : Value::Type::number_array;
  for (const std::string& item : items) {
    const Value s = parse_scalar(origin, line, item);
    if (first_is_string) {
      if (s.type != Value::Type::string)
        fail(origin, line, "mixed array element types");
      v.strs.push_back(s.str);
    } else {
      if (s.type != Value::Type::number)
        fail(origin, line, "mixed array element types");
      v.nums.push_back(s.num);
    }
  }
  return v;
}

} // namespace

Document Document::parse_string(const std::string& text, const std::string& origin) {
  Document doc;
  doc.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_section(section)) fail(origin, line_no, "invalid section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail(origin, line_no, "invalid key '" + key + "'");
    std::string rest = trim(line.substr(eq + 1));
    if (rest.empty()) fail(origin, line_no, "missing value for '" + key + "'");

    Value v;
    const int value_line = line_no;
    if (rest.front() == '[') {
      // Accumulate (possibly multi-line) array until the closing bracket.
      std::string body = rest.substr(1);
      while (true) {
        // Count bracket depth outside strings.
        bool in_str = false;
        int depth = 1;
        std::size_t close = std::string::npos;
        for (std::size_t i = 0; i < body.size(); ++i) {
          const char c = body[i];
          if (in_str) {
            if (c == '\\') ++i;
            else if (c == '"') in_str = false;
          } else if (c == '"') {
            in_str = true;
          } else if (c == '[') {
            ++depth;
          } else if (c == ']') {
            if (--depth == 0) {
              close = i;
              break;
            }
          }
        }
        if (close != std::string::npos) {
          if (!trim(body.substr(close + 1)).empty())
            fail(origin, value_line, "trailing text after array");
          body = body.substr(0, close);
          break;
        }
        if (!std::getline(in, raw)) fail(origin, value_line, "unterminated array");
        ++line_no;
        body += "\n" + strip_comment(raw);
      }
      if (body.find('[') != std::string::npos)
        fail(origin, value_line, "nested arrays are not supported");
      v = parse_array(origin, value_line, body);
    } else {
      v = parse_scalar(origin, value_line, rest);
    }

    const std::string path = section.empty() ? key : section + "." + key;
    if (doc.entries_.count(path)) fail(origin, value_line, "duplicate key '" + path + "'");
    doc.entries_.emplace(path, std::move(v));
  }
  return doc;
}

Document Document::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

bool Document::has(const std::string& path) const { return entries_.count(path) > 0; }

const Value* Document::find(const std::string& path) const {
  const auto it = entries_.find(path);
  return it == entries_.end() ? nullptr : &it->second;
}

const Value& Document::require(const std::string& path, Value::Type t) const {
  const Value* v = find(path);
  if (!v) throw std::runtime_error(origin_ + ": missing required key '" + path + "'");
  if (v->type != t) {
    const char* names[] = {"string", "number", "boolean", "number array", "string array"};
    throw std::runtime_error(origin_ + ": key '" + path + "' has wrong type (expected " +
                             names[int(t)] + ")");
  }
  return *v;
}

std::string Document::get_string(const std::string& path) const {
  return require(path, Value::Type::string).str;
}

std::string Document::get_string(const std::string& path, const std::string& fallback) const {
  return find(path) ? get_string(path) : fallback;
}

double Document::get_number(const std::string& path) const {
  return require(path, Value::Type::number).num;
}

double Document::get_number(const std::string& path, double fallback) const {
  return find(path) ? get_number(path) : fallback;
}

std::int64_t Document::get_integer(const std::string& path) const {
  const Value& v = require(path, Value::Type::number);
  if (!v.integral)
    throw std::runtime_error(origin_ + ": key '" + path + "' must be an integer");
  return std::int64_t(v.num);
}

std::int64_t Document::get_integer(const std::string& path, std::int64_t fallback) const {
  return find(path) ? get_integer(path) : fallback;
}

bool Document::get_bool(const std::string& path, bool fallback) const {
  if (!find(path)) return fallback;
  return require(path, Value::Type::boolean).boolean;
}

std::vector<double> Document::get_number_array(const std::string& path) const {
  return require(path, Value::Type::number_array).nums;
}

std::vector<double> Document::get_number_array(const std::string& path,
                                               const std::vector<double>& fallback) const {
  return find(path) ? get_number_array(path) : fallback;
}

std::vector<std::string> Document::get_string_array(const std::string& path) const {
  return require(path, Value::Type::string_array).strs;
}

std::vector<std::string> Document::paths() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<std::string> Document::paths_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0)
      out.push_back(k);
  return out;
}

std::string Document::canonical() const {
  std::ostringstream os;
  for (const auto& [path, v] : entries_) {
    os << path << "=";
    switch (v.type) {
      case Value::Type::string: os << '"' << v.str << '"'; break;
      case Value::Type::number: os << fmt_g17(v.num); break;
      case Value::Type::boolean: os << (v.boolean ? "true" : "false"); break;
      case Value::Type::number_array:
        os << "[";
        for (std::size_t i = 0; i < v.nums.size(); ++i)
          os << (i ? "," : "") << fmt_g17(v.nums[i]);
        os << "]";
        break;
      case Value::Type::string_array:
        os << "[";
        for (std::size_t i = 0; i < v.strs.size(); ++i)
          os << (i ? "," : "") << '"' << v.strs[i] << '"';
        os << "]";
        break;
    }
    os << "\n";
  }
  return os.str();
}

std::uint64_t Document::digest() const {
  Fnv1a h;
  h.absorb(canonical());
  return h.value();
}

} // namespace gac::toml
