#pragma once
// Shared configuration-file format: INI-style sections of key=value pairs.
//
//   # full-line comment
//   [train]
//   head_lr = 0.01
//
// Parsing and schema validation collect every problem they find instead of
// stopping at the first, so a caller can list all violations before exiting.

#include <cctype>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/io.hpp"

namespace ilc::config {

enum class ValueKind { kInt, kDouble, kBool, kString };

inline const char* kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::kInt: return "integer";
    case ValueKind::kDouble: return "real";
    case ValueKind::kBool: return "boolean";
    default: return "string";
  }
}

struct Entry {
  std::string value;
  int line = 0;
};

struct ParsedConfig {
  // section name -> key -> entry
  std::map<std::string, std::map<std::string, Entry>> sections;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

// Parses config text. Syntax problems (malformed lines, duplicate keys, keys
// before any section header) are appended to `violations` with line numbers;
// parsing continues past them so one pass reports everything.
inline ParsedConfig parse_config(const std::string& text,
                                 std::vector<std::string>* violations) {
  ParsedConfig out;
  std::string section;
  bool in_section = false;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') {
      if (pos > text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        violations->push_back("line " + std::to_string(line_no) +
                              ": malformed section header '" + line + "'");
      } else {
        section = detail::trim(line.substr(1, line.size() - 2));
        in_section = true;
        out.sections[section];  // a section may be empty
      }
    } else {
      size_t eq = line.find('=');
      if (eq == std::string::npos) {
        violations->push_back("line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
      } else if (!in_section) {
        violations->push_back("line " + std::to_string(line_no) +
                              ": key outside any [section]");
      } else {
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
          violations->push_back("line " + std::to_string(line_no) +
                                ": empty key");
        } else {
          auto [it, inserted] =
              out.sections[section].insert({key, {value, line_no}});
          if (!inserted)
            violations->push_back(
                "line " + std::to_string(line_no) + ": duplicate key '" + key +
                "' in [" + section + "] (first set on line " +
                std::to_string(it->second.line) + ")");
        }
      }
    }
    if (pos > text.size()) break;
  }
  return out;
}

inline bool parse_int(const std::string& s, long long* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

inline bool parse_real(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

inline bool parse_bool(const std::string& s, bool* out) {
  if (s == "true" || s == "1") {
    *out = true;
    return true;
  }
  if (s == "false" || s == "0") {
    *out = false;
    return true;
  }
  return false;
}

// Known keys per known section.
using Schema = std::map<std::string, std::map<std::string, ValueKind>>;

// Appends a violation for every unknown section, unknown key within a known
// section, and value that does not parse as its declared kind.
inline void validate_schema(const ParsedConfig& cfg, const Schema& schema,
                            std::vector<std::string>* violations) {
  for (const auto& [section, entries] : cfg.sections) {
    auto sit = schema.find(section);
    if (sit == schema.end()) {
      violations->push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, entry] : entries) {
      auto kit = sit->second.find(key);
      if (kit == sit->second.end()) {
        violations->push_back("line " + std::to_string(entry.line) +
                              ": unknown key '" + key + "' in [" + section +
                              "]");
        continue;
      }
      bool ok = true;
      long long i;
      double d;
      bool b;
      switch (kit->second) {
        case ValueKind::kInt: ok = parse_int(entry.value, &i); break;
        case ValueKind::kDouble: ok = parse_real(entry.value, &d); break;
        case ValueKind::kBool: ok = parse_bool(entry.value, &b); break;
        case ValueKind::kString: break;
      }
      if (!ok)
        violations->push_back("line " + std::to_string(entry.line) + ": key '" +
                              key + "' in [" + section + "] expects " +
                              kind_name(kit->second) + ", got '" + entry.value +
                              "'");
    }
  }
}

// Typed lookups for an already-validated config; return false when the key is
// absent and throw when the stored text does not parse (callers validate
// first, so that indicates a programming error upstream).
inline bool get(const ParsedConfig& cfg, const std::string& section,
                const std::string& key, std::string* out) {
  auto sit = cfg.sections.find(section);
  if (sit == cfg.sections.end()) return false;
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return false;
  *out = kit->second.value;
  return true;
}

inline bool get(const ParsedConfig& cfg, const std::string& section,
                const std::string& key, long long* out) {
  std::string s;
  if (!get(cfg, section, key, &s)) return false;
  check(parse_int(s, out), "config: key '" + key + "' is not an integer");
  return true;
}

inline bool get(const ParsedConfig& cfg, const std::string& section,
                const std::string& key, int* out) {
  long long v;
  if (!get(cfg, section, key, &v)) return false;
  *out = static_cast<int>(v);
  return true;
}

inline bool get(const ParsedConfig& cfg, const std::string& section,
                const std::string& key, double* out) {
  std::string s;
  if (!get(cfg, section, key, &s)) return false;
  check(parse_real(s, out), "config: key '" + key + "' is not a real number");
  return true;
}

inline bool get(const ParsedConfig& cfg, const std::string& section,
                const std::string& key, bool* out) {
  std::string s;
  if (!get(cfg, section, key, &s)) return false;
  check(parse_bool(s, out), "config: key '" + key + "' is not a boolean");
  return true;
}

inline ParsedConfig load_config(const std::string& path,
                                std::vector<std::string>* violations) {
  return parse_config(io::read_text(path), violations);
}

}  // namespace ilc::config
