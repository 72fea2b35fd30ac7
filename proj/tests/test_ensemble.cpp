#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "sentinel/ensemble.hpp"
#include "sentinel/phantom.hpp"

using namespace sentinel;
using testing::random_mask;
using testing::random_volume;
using testing::values_of;

namespace {

std::vector<Volume> random_members(SplitMix64& rng, const VoxelGrid& g, int n) {
  std::vector<Volume> members;
  for (int i = 0; i < n; ++i) members.push_back(random_volume(rng, g, -1024.0, 3071.0));
  return members;
}

std::vector<std::vector<float>> raw(const std::vector<Volume>& members) {
  std::vector<std::vector<float>> out;
  for (const auto& m : members) out.push_back(values_of(m));
  return out;
}

}  // namespace

TEST_CASE("median and disagreement match sort-based and all-pairs oracles") {
  SplitMix64 rng(101);
  const auto g = make_grid({7, 6, 5});
  for (int n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto members = random_members(rng, g, n);
      CHECK(values_of(fuse_median(members)) == oracle::median_by_sort(raw(members)));
      CHECK(values_of(uncertainty_map(members)) == oracle::max_pairwise_difference(raw(members)));
    }
  }
}

TEST_CASE("median with ties and repeated values") {
  const auto g = make_grid({3, 1, 1});
  const std::vector<Volume> members{Volume(g, {1, 5, 5}, Semantics::HounsfieldUnits),
                                    Volume(g, {1, 5, -3}, Semantics::HounsfieldUnits),
                                    Volume(g, {2, 5, 7}, Semantics::HounsfieldUnits),
                                    Volume(g, {4, 5, 7}, Semantics::HounsfieldUnits)};
  const Volume med = fuse_median(members);
  CHECK(med[0] == 1.5f);
  CHECK(med[1] == 5.0f);
  CHECK(med[2] == 6.0f);
  const Volume u = uncertainty_map(members);
  CHECK(u[0] == 3.0f);
  CHECK(u[1] == 0.0f);
  CHECK(u[2] == 10.0f);
}

TEST_CASE("median is permutation invariant and bounded") {
  SplitMix64 rng(5);
  const auto g = make_grid({4, 4, 4});
  for (int n = 2; n <= 5; ++n) {
    auto members = random_members(rng, g, n);
    const auto base_med = values_of(fuse_median(members));
    const auto base_u = values_of(uncertainty_map(members));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    do {
      std::vector<Volume> perm;
      for (int i : order) perm.push_back(members[i]);
      CHECK(values_of(fuse_median(perm)) == base_med);
      CHECK(values_of(uncertainty_map(perm)) == base_u);
    } while (std::next_permutation(order.begin(), order.end()));
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      float lo = members[0][i], hi = members[0][i];
      for (const auto& m : members) {
        lo = std::min(lo, m[i]);
        hi = std::max(hi, m[i]);
      }
      CHECK(base_med[i] >= lo);
      CHECK(base_med[i] <= hi);
      CHECK(base_u[i] >= 0.0f);
    }
  }
}

TEST_CASE("identical members have zero disagreement") {
  SplitMix64 rng(9);
  const auto g = make_grid({5, 5, 5});
  const Volume v = random_volume(rng, g, -1000.0, 1000.0);
  const std::vector<Volume> members{v, v, v};
  CHECK(values_of(fuse_median(members)) == values_of(v));
  const Volume u = uncertainty_map(members);
  CHECK(std::all_of(u.values().begin(), u.values().end(), [](float x) { return x == 0.0f; }));
  CHECK(mean_uncertainty(u, Mask::filled(g, true)) == 0.0);
}

TEST_CASE("ensemble preconditions") {
  const auto g = make_grid({3, 3, 3});
  const Volume hu = Volume::filled(g, 0.0f, Semantics::HounsfieldUnits);
  const Volume mr = Volume::filled(g, 0.0f, Semantics::MrIntensityArbitrary);
  const Volume other = Volume::filled(make_grid({3, 3, 4}), 0.0f, Semantics::HounsfieldUnits);
  CHECK_ERROR_KIND(fuse_median(std::vector<Volume>{hu}), ErrorKind::TooFewMembers);
  CHECK_ERROR_KIND(uncertainty_map(std::vector<Volume>{hu}), ErrorKind::TooFewMembers);
  CHECK_ERROR_KIND(fuse_median(std::vector<Volume>{hu, other}), ErrorKind::IncompatibleGrids);
  CHECK_ERROR_KIND(uncertainty_map(std::vector<Volume>{hu, other}), ErrorKind::IncompatibleGrids);
  CHECK_ERROR_KIND(fuse_median(std::vector<Volume>{hu, mr}), ErrorKind::InvalidArgument);
  CHECK_ERROR_KIND(mean_uncertainty(hu, Mask::filled(g, false)), ErrorKind::EmptyMask);
}

TEST_CASE("mean uncertainty ignores voxels outside the mask") {
  SplitMix64 rng(77);
  const auto g = make_grid({6, 6, 6});
  for (int trial = 0; trial < 25; ++trial) {
    const Volume u = random_volume(rng, g, 0.0, 500.0);
    const Mask m = random_mask(rng, g, 0.4);
    if (m.count() == 0) continue;
    auto perturbed = values_of(u);
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
      if (!m[i]) perturbed[i] = static_cast<float>((rng.uniform() - 0.5) * 1e30);
    }
    const double a = mean_uncertainty(u, m);
    const double b = mean_uncertainty(Volume(g, perturbed, Semantics::HounsfieldUnits), m);
    CHECK(a == b);
    CHECK(testing::rel_err(a, double(oracle::masked_mean(u.values(), m.bits()))) < 1e-12);
  }
}

TEST_CASE("homogeneity and shift invariance") {
  SplitMix64 rng(31);
  const auto g = make_grid({5, 4, 3});
  for (int n = 2; n <= 5; ++n) {
    const auto members = random_members(rng, g, n);
    const double a = 0.25 + 3.0 * rng.uniform(), b = (rng.uniform() - 0.5) * 1000.0;
    std::vector<Volume> scaled, shifted;
    for (const auto& m : members) {
      std::vector<float> s(m.size()), t(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        s[i] = static_cast<float>(a * m[i]);
        t[i] = static_cast<float>(m[i] + b);
      }
      scaled.emplace_back(g, s, Semantics::HounsfieldUnits);
      shifted.emplace_back(g, t, Semantics::HounsfieldUnits);
    }
    const Volume med = fuse_median(members), u = uncertainty_map(members);
    const Volume med_s = fuse_median(scaled), u_s = uncertainty_map(scaled);
    const Volume med_t = fuse_median(shifted), u_t = uncertainty_map(shifted);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      // relative to the magnitude of the operands that were rounded
      double scale = 0.0;
      for (std::size_t k = 0; k < members.size(); ++k) {
        scale = std::max({scale, std::fabs(double(scaled[k][i])), std::fabs(double(shifted[k][i])),
                          std::fabs(double(members[k][i]))});
      }
      CHECK(std::fabs(med_s[i] - a * med[i]) <= 1e-6 * scale);
      CHECK(std::fabs(u_s[i] - a * u[i]) <= 1e-6 * scale);
      CHECK(std::fabs(med_t[i] - (med[i] + b)) <= 1e-6 * scale);
      CHECK(std::fabs(u_t[i] - u[i]) <= 1e-6 * scale);
    }
  }
}

TEST_CASE("run_ensemble on a phantom") {
  PhantomSpec spec = resize_spec(PhantomSpec{}, 40);
  const Phantom p = generate_phantom(spec);
  const std::vector<Volume> same{p.ct, p.ct, p.ct};
  const EnsembleRun run = run_ensemble(same, p.mr);
  CHECK(run.mean_uncertainty == 0.0);
  CHECK(run.result.member_count == 3);
  CHECK(values_of(run.result.fused) == values_of(p.ct));
  CHECK(run.body.count() > 0);
}
