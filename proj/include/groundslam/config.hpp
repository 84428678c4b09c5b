#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace groundslam {

/// Flat `key = value` file with `#` comments and optional `[section]`
/// headers; keys inside a section are stored as "section.key". Values may be
/// bare or double-quoted.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& origin = "<string>");
  static KeyValues from_file(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

}  // namespace groundslam
