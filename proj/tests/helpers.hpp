#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "sentinel/error.hpp"
#include "sentinel/random.hpp"
#include "sentinel/volume.hpp"

namespace testing {

// Checks that `expr` throws sentinel::Error of kind `expected_kind`.
#define CHECK_ERROR_KIND(expr, expected_kind)                                          \
  do {                                                                                 \
    bool thrown_ = false;                                                              \
    try {                                                                              \
      (void)(expr);                                                                    \
    } catch (const sentinel::Error& e_) {                                              \
      thrown_ = true;                                                                  \
      CHECK_MESSAGE(e_.kind() == (expected_kind), "got ", sentinel::kind_name(e_.kind())); \
    }                                                                                  \
    CHECK_MESSAGE(thrown_, "expected ", sentinel::kind_name(expected_kind));           \
  } while (0)

inline std::vector<float> random_values(sentinel::SplitMix64& rng, std::size_t n, double lo, double hi) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return v;
}

inline sentinel::Volume random_volume(sentinel::SplitMix64& rng, const sentinel::VoxelGrid& g, double lo, double hi,
                                      sentinel::Semantics s = sentinel::Semantics::HounsfieldUnits) {
  return sentinel::Volume(g, random_values(rng, g.voxel_count(), lo, hi), s);
}

inline sentinel::Mask random_mask(sentinel::SplitMix64& rng, const sentinel::VoxelGrid& g, double p) {
  std::vector<std::uint8_t> bits(g.voxel_count());
  for (auto& b : bits) b = rng.uniform() < p;
  return sentinel::Mask(g, std::move(bits));
}

inline std::vector<std::uint8_t> bits_of(const sentinel::Mask& m) { return {m.bits().begin(), m.bits().end()}; }

inline std::vector<float> values_of(const sentinel::Volume& v) { return {v.values().begin(), v.values().end()}; }

inline double rel_err(double got, double want) {
  if (got == want) return 0.0;
  return std::fabs(got - want) / std::fabs(want);
}

}  // namespace testing
