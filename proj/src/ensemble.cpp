#include "sentinel/ensemble.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "sentinel/error.hpp"

namespace sentinel {

namespace {

void check_members(std::span<const Volume> members) {
  if (members.size() < 2) {
    throw Error(ErrorKind::TooFewMembers, fmt::format("ensemble needs at least 2 members, got {}", members.size()));
  }
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].semantics() != Semantics::HounsfieldUnits) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("member {} is not a HU volume", i));
    }
    if (i > 0) require_compatible(members[0].grid(), members[i].grid(), "ensemble member");
  }
}

// Adding +0 maps -0 to +0, so tied signed zeros give the same bits in any
// member order.
float canonical_zero(float x) { return x + 0.0f; }

float median_of_three(float a, float b, float c) {
  return canonical_zero(std::max(std::min(a, b), std::min(std::max(a, b), c)));
}

}  // namespace

Volume fuse_median(std::span<const Volume> members) {
  check_members(members);
  const std::size_t n = members.size();
  const std::size_t voxels = members[0].size();
  std::vector<float> out(voxels);

  if (n == 3) {
    const auto a = members[0].values(), b = members[1].values(), c = members[2].values();
    for (std::size_t i = 0; i < voxels; ++i) out[i] = median_of_three(a[i], b[i], c[i]);
  } else {
    std::vector<float> scratch(n);
    for (std::size_t i = 0; i < voxels; ++i) {
      for (std::size_t m = 0; m < n; ++m) scratch[m] = members[m][i];
      std::sort(scratch.begin(), scratch.end());
      if (n % 2 == 1) {
        out[i] = canonical_zero(scratch[n / 2]);
      } else {
        // The double sum is exact, so rounding keeps the result inside [lo, hi].
        const double lo = scratch[n / 2 - 1], hi = scratch[n / 2];
        out[i] = canonical_zero(static_cast<float>((lo + hi) * 0.5));
      }
    }
  }
  return Volume(members[0].grid(), std::move(out), Semantics::HounsfieldUnits);
}

Volume uncertainty_map(std::span<const Volume> members) {
  check_members(members);
  const std::size_t voxels = members[0].size();
  std::vector<float> lo(members[0].values().begin(), members[0].values().end());
  std::vector<float> hi = lo;
  for (std::size_t m = 1; m < members.size(); ++m) {
    const auto v = members[m].values();
    for (std::size_t i = 0; i < voxels; ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  }
  for (std::size_t i = 0; i < voxels; ++i) hi[i] = canonical_zero(hi[i] - lo[i]);
  return Volume(members[0].grid(), std::move(hi), Semantics::HounsfieldUnits);
}

double mean_uncertainty(const Volume& u, const Mask& body) { return stats_within_mask(u, body).mean; }

EnsembleRun run_ensemble(std::span<const Volume> members, const Volume& mr, const ContourParams& params) {
  check_members(members);
  require_compatible(members[0].grid(), mr.grid(), "MR input");
  Mask body = extract_body_contour(mr, params);
  Volume fused = fuse_median(members);
  Volume uncertainty = uncertainty_map(members);
  const double mean_u = mean_uncertainty(uncertainty, body);
  return EnsembleRun{EnsembleResult{std::move(fused), std::move(uncertainty), static_cast<int>(members.size())},
                     std::move(body), mean_u};
}

}  // namespace sentinel
