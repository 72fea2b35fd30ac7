#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "sentinel/volume.hpp"

using namespace sentinel;
using testing::random_mask;
using testing::random_volume;

TEST_CASE("grid validation") {
  CHECK_NOTHROW(make_grid({4, 5, 6}, {0.5, 1.0, 2.0}));
  CHECK_ERROR_KIND(make_grid({0, 5, 6}), ErrorKind::InvalidGrid);
  CHECK_ERROR_KIND(make_grid({4, -1, 6}), ErrorKind::InvalidGrid);
  CHECK_ERROR_KIND(make_grid({4, 4, 4}, {1.0, 0.0, 1.0}), ErrorKind::InvalidGrid);
  CHECK_ERROR_KIND(make_grid({4, 4, 4}, {1.0, std::nan(""), 1.0}), ErrorKind::InvalidGrid);
  CHECK_ERROR_KIND(make_grid({4, 4, 4}, {1.0, 1.0, 1.0}, {0.0, INFINITY, 0.0}), ErrorKind::InvalidGrid);
}

TEST_CASE("x-fastest indexing") {
  const auto g = make_grid({3, 4, 5});
  CHECK(g.index(0, 0, 0) == 0);
  CHECK(g.index(1, 0, 0) == 1);
  CHECK(g.index(0, 1, 0) == 3);
  CHECK(g.index(0, 0, 1) == 12);
  CHECK(g.index(2, 3, 4) == g.voxel_count() - 1);
  CHECK(g.contains(2, 3, 4));
  CHECK_FALSE(g.contains(3, 0, 0));
  CHECK_FALSE(g.contains(0, -1, 0));
}

TEST_CASE("compatibility is reflexive and symmetric with tolerances") {
  const auto a = make_grid({8, 8, 8}, {1.0, 1.0, 2.0}, {0, 0, 0});
  const auto b = make_grid({8, 8, 8}, {1.0 + 5e-7, 1.0, 2.0}, {5e-4, 0, 0});
  const auto c = make_grid({8, 8, 8}, {1.0 + 5e-6, 1.0, 2.0});
  const auto d = make_grid({8, 8, 8}, {1.0, 1.0, 2.0}, {2e-3, 0, 0});
  const auto e = make_grid({8, 8, 9}, {1.0, 1.0, 2.0});
  for (const auto* g : {&a, &b, &c, &d, &e}) CHECK(check_compatible(*g, *g));
  CHECK(check_compatible(a, b));
  CHECK(check_compatible(b, a));
  CHECK_FALSE(check_compatible(a, c));
  CHECK_FALSE(check_compatible(c, a));
  CHECK_FALSE(check_compatible(a, d));
  CHECK_FALSE(check_compatible(d, a));
  CHECK_FALSE(check_compatible(a, e));
  CHECK_ERROR_KIND(require_compatible(a, e, "test"), ErrorKind::IncompatibleGrids);
}

TEST_CASE("volume construction rejects bad input") {
  const auto g = make_grid({2, 2, 2});
  CHECK_ERROR_KIND(Volume(g, std::vector<float>(7, 0.0f), Semantics::HounsfieldUnits), ErrorKind::InvalidGrid);
  std::vector<float> v(8, 1.0f);
  v[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_ERROR_KIND(Volume(g, v, Semantics::HounsfieldUnits), ErrorKind::NonFiniteInput);
  v[3] = -std::numeric_limits<float>::infinity();
  CHECK_ERROR_KIND(Volume(g, v, Semantics::HounsfieldUnits), ErrorKind::NonFiniteInput);
  CHECK_ERROR_KIND(Mask(g, std::vector<std::uint8_t>(9, 0)), ErrorKind::InvalidGrid);
}

TEST_CASE("mask bits are normalized") {
  const auto g = make_grid({2, 1, 1});
  const Mask m(g, {0, 7});
  CHECK(m.bits()[1] == 1);
  CHECK(m.count() == 1);
  CHECK(m == Mask(g, {0, 1}));
}

TEST_CASE("clamp to HU range is bounded and idempotent") {
  SplitMix64 rng(7);
  const auto g = make_grid({6, 5, 4});
  const Volume v = random_volume(rng, g, -5000.0, 6000.0);
  const Volume c = clamp_to_hu_range(v);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i] >= kHuMin);
    CHECK(c[i] <= kHuMax);
    if (v[i] >= kHuMin && v[i] <= kHuMax) CHECK(c[i] == v[i]);
  }
  const Volume cc = clamp_to_hu_range(c);
  CHECK(std::equal(c.values().begin(), c.values().end(), cc.values().begin()));
  CHECK_ERROR_KIND(clamp_to_hu_range(Volume::filled(g, 1.0f, Semantics::MrIntensityArbitrary)),
                   ErrorKind::InvalidArgument);
}

TEST_CASE("masked statistics match a long double loop") {
  SplitMix64 rng(11);
  const auto g = make_grid({9, 7, 5});
  for (int trial = 0; trial < 20; ++trial) {
    const Volume v = random_volume(rng, g, -1000.0, 2000.0);
    const Mask m = random_mask(rng, g, 0.3);
    if (m.count() == 0) continue;
    const MaskedStats s = stats_within_mask(v, m);
    const long double mean = oracle::masked_mean(v.values(), m.bits());
    long double ss = 0, lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!m[i]) continue;
      ss += (v[i] - mean) * (v[i] - mean);
      lo = std::min<long double>(lo, v[i]);
      hi = std::max<long double>(hi, v[i]);
    }
    CHECK(s.count == m.count());
    CHECK(testing::rel_err(s.mean, double(mean)) < 1e-12);
    CHECK(testing::rel_err(s.std, double(std::sqrt(ss / m.count()))) < 1e-12);
    CHECK(s.min == double(lo));
    CHECK(s.max == double(hi));
  }
  CHECK_ERROR_KIND(stats_within_mask(Volume::filled(g, 1.0f, Semantics::HounsfieldUnits), Mask::filled(g, false)),
                   ErrorKind::EmptyMask);
  CHECK_ERROR_KIND(stats_within_mask(Volume::filled(g, 1.0f, Semantics::HounsfieldUnits),
                                     Mask::filled(make_grid({9, 7, 6}), true)),
                   ErrorKind::IncompatibleGrids);
}

TEST_CASE("compensated sum recovers cancelled low-order terms") {
  CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 1.0);
}

TEST_CASE("mask and volume views round-trip") {
  SplitMix64 rng(3);
  const auto g = make_grid({5, 5, 5});
  const Mask m = random_mask(rng, g, 0.5);
  const Volume v = mask_to_volume(m);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == (m[i] ? 1.0f : 0.0f));
  CHECK(volume_to_mask(v) == m);
}
