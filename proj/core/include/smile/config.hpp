#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace smile {

/// Flat `key = value` configuration with `[section]` headers; keys are
/// addressed as "section.key". Unknown keys are kept (and round-trip through
/// dump()), so configs stay forward compatible.
class Config {
 public:
  static Config defaults();
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;

  /// Applies "section.key=value" override strings (CLI flags).
  void apply_overrides(const std::vector<std::string>& overrides);

  /// Merge: entries of `other` win.
  void merge_from(const Config& other);

  /// Serialized with sections grouped and keys sorted, so two equal configs
  /// dump byte-identically.
  std::string dump() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace smile
