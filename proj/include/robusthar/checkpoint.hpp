#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robusthar/tensor.hpp"

namespace robusthar {

// Versioned binary model container:
//
//   "RHCKPT\0\0"  u32 version  str kind
//   u32 n  { str key  str value }*n            config, sorted by key
//   u32 m  { str name  u32 rank  u64 dim*rank  f64 value* }*m
//
// where str is u32 length + bytes. All integers and doubles little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor& array(const std::string& name) const;
  const std::string& setting(const std::string& key) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace robusthar
