#include "asdl/keyvalue.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "asdl/errors.hpp"

namespace asdl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + expected);
}

}  // namespace

bool KeyValueSection::has(const std::string& key) const { return find(key) != nullptr; }

std::vector<std::string> KeyValueSection::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

const std::string* KeyValueSection::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& KeyValueSection::get_string(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw ConfigError("section [" + name_ + "]: missing required key '" + key + "'");
  return *v;
}

std::string KeyValueSection::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double KeyValueSection::get_double(const std::string& key) const {
  const std::string& v = get_string(key);
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
}

double KeyValueSection::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t KeyValueSection::get_int(const std::string& key) const {
  const std::string& v = get_string(key);
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::int64_t KeyValueSection::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueSection::get_uint64(const std::string& key) const {
  const std::string& v = get_string(key);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

std::uint64_t KeyValueSection::get_uint64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_uint64(key) : fallback;
}

bool KeyValueSection::get_bool(const std::string& key) const {
  const std::string& v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

bool KeyValueSection::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

void KeyValueSection::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueSection::set_double(const std::string& key, double value) {
  set(key, format_double(value));
}

void KeyValueSection::set_int(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KeyValueSection::set_uint64(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

void KeyValueSection::set_bool(const std::string& key, bool value) {
  set(key, value ? "true" : "false");
}

void KeyValueSection::reject_unknown_keys(const std::vector<std::string>& allowed) const {
  for (const auto& [k, v] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError("section [" + name_ + "]: unknown key '" + k + "'");
    }
  }
}

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile file;
  KeyValueSection* current = nullptr;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      current = &file.add_section(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    if (!current) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (current->has(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    current->set(key, trim(line.substr(eq + 1)));
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string KeyValueFile::serialize() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& sec : sections_) {
    if (!first) out << "\n";
    first = false;
    out << "[" << sec.name() << "]\n";
    for (const auto& key : sec.keys()) {
      out << key << " = " << sec.get_string(key) << "\n";
    }
  }
  return out.str();
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config file: " + path.string());
  out << serialize();
}

bool KeyValueFile::has_section(const std::string& name) const {
  for (const auto& sec : sections_) {
    if (sec.name() == name) return true;
  }
  return false;
}

KeyValueSection& KeyValueFile::section(const std::string& name) {
  for (auto& sec : sections_) {
    if (sec.name() == name) return sec;
  }
  throw ConfigError("missing required section [" + name + "]");
}

const KeyValueSection& KeyValueFile::section(const std::string& name) const {
  for (const auto& sec : sections_) {
    if (sec.name() == name) return sec;
  }
  throw ConfigError("missing required section [" + name + "]");
}

KeyValueSection& KeyValueFile::add_section(const std::string& name) {
  if (has_section(name)) throw ConfigError("duplicate section [" + name + "]");
  sections_.emplace_back(name);
  return sections_.back();
}

std::vector<std::string> KeyValueFile::section_names() const {
  std::vector<std::string> out;
  out.reserve(sections_.size());
  for (const auto& sec : sections_) out.push_back(sec.name());
  return out;
}

void KeyValueFile::reject_unknown_sections(const std::vector<std::string>& allowed) const {
  for (const auto& sec : sections_) {
    if (std::find(allowed.begin(), allowed.end(), sec.name()) == allowed.end()) {
      throw ConfigError("unknown section [" + sec.name() + "]");
    }
  }
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(what + ": cannot parse '" + tok + "' as a number");
    }
  }
  return out;
}

std::string format_double(double v) {
  // Round-trip formatting keeps serialized configs lossless.
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[64];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &back);
      if (back == v) return shorter;
    }
  }
  return buf;
}

}  // namespace asdl
