#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace asdl {

// Human-readable key-value configuration format used across the project
// (rig files, scene scripts, run/train configs):
//
//   # comment
//   [section]
//   key = value
//
// Keys keep insertion order so serialization is deterministic. Values are
// free-form strings; typed accessors parse on demand.
class KeyValueSection {
 public:
  explicit KeyValueSection(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  bool has(const std::string& key) const;
  std::vector<std::string> keys() const;

  const std::string& get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint64(const std::string& key) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, std::int64_t value);
  void set_uint64(const std::string& key, std::uint64_t value);
  void set_bool(const std::string& key, bool value);

  // Throws ConfigError naming the first key not in `allowed`.
  void reject_unknown_keys(const std::vector<std::string>& allowed) const;

 private:
  const std::string* find(const std::string& key) const;

  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  bool has_section(const std::string& name) const;
  KeyValueSection& section(const std::string& name);              // throws if absent
  const KeyValueSection& section(const std::string& name) const;  // throws if absent
  KeyValueSection& add_section(const std::string& name);
  std::vector<std::string> section_names() const;

  // Throws ConfigError naming the first section not in `allowed`.
  void reject_unknown_sections(const std::vector<std::string>& allowed) const;

 private:
  std::vector<KeyValueSection> sections_;
};

// Splits a whitespace-separated list of doubles ("0.1 -0.2 3.0").
std::vector<double> parse_double_list(const std::string& text, const std::string& what);

std::string format_double(double v);

}  // namespace asdl
