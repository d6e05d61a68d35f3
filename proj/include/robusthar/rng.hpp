#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace robusthar {

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// A node in a deterministic tree of random streams. Children derived with
// different keys are statistically independent, and the whole tree is fixed
// by the root value.
class StreamSeed {
 public:
  constexpr StreamSeed() = default;
  constexpr explicit StreamSeed(std::uint64_t value) : value_(value) {}

  constexpr std::uint64_t value() const { return value_; }

  constexpr StreamSeed child(std::uint64_t key) const {
    return StreamSeed(mix64(value_ ^ mix64(key + 0x632be59bd9b4e019ULL)));
  }
  constexpr StreamSeed child(std::string_view label) const { return child(hash_label(label)); }

  std::mt19937_64 engine() const { return std::mt19937_64(mix64(value_)); }

  friend constexpr bool operator==(StreamSeed, StreamSeed) = default;

 private:
  std::uint64_t value_ = 0;
};

}  // namespace robusthar
