#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace robusthar {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::vector<std::string> split_list(std::string_view text, char sep);

// Flat `key = value` text with dotted namespaces. Blank lines and lines
// starting with '#' are ignored; a repeated key is an error.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void erase(const std::string& key) { entries_.erase(key); }

  const std::string& get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated numbers; empty when the key is absent.
  std::vector<double> get_doubles(const std::string& key) const;

  // Keys under "prefix." with the prefix stripped.
  KeyValueConfig subtree(const std::string& prefix) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Sorted "key=value\n" lines; the input of hash().
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace robusthar
