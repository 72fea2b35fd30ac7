#pragma once

#include <cstdint>
#include <string_view>

namespace sentinel {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view text);

/// Seed of an independent stream:
///   mix64(mix64(root ^ mix64(index + 0x9E3779B97F4A7C15)) ^ fnv1a64(stream))
/// Every random draw in the simulator comes from a stream derived this way,
/// so per-case output does not depend on execution order.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index, std::string_view stream);

/// SplitMix64 generator: state += 0x9E3779B97F4A7C15, output = mix64(state).
/// Normals use the Box-Muller transform and consume two uniforms per pair.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sentinel
