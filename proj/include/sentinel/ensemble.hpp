#pragma once

#include <span>
#include <vector>

#include "sentinel/contour.hpp"
#include "sentinel/volume.hpp"

namespace sentinel {

/// Fused sCT plus its disagreement map. Both share the member grid.
struct EnsembleResult {
  Volume fused;
  Volume uncertainty;
  int member_count = 0;
};

/// Per-voxel median of the members. For an even member count the two middle
/// values are averaged. Throws TooFewMembers (N < 2), IncompatibleGrids, or
/// InvalidArgument for non-HU members.
Volume fuse_median(std::span<const Volume> members);

/// Per-voxel maximum absolute pairwise difference, computed as max - min
/// (the two are identical for any member count).
Volume uncertainty_map(std::span<const Volume> members);

/// Mean of u over the voxels selected by body. Voxels outside the mask do
/// not take part in the computation at all.
double mean_uncertainty(const Volume& u, const Mask& body);

struct EnsembleRun {
  EnsembleResult result;
  Mask body;
  double mean_uncertainty = 0.0;
};

/// Contour from the MR, fusion and disagreement from the members.
EnsembleRun run_ensemble(std::span<const Volume> members, const Volume& mr, const ContourParams& params = {});

}  // namespace sentinel
