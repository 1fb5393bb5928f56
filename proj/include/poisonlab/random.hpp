#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace poisonlab {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent stream seed for (master, repetition, stage). Adding a new stage
/// never shifts the seeds of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t repetition,
                                    std::string_view stage) {
  return mix64(mix64(master ^ mix64(repetition)) ^ fnv1a(stage));
}

} // namespace poisonlab
