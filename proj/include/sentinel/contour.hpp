#pragma once

#include "sentinel/volume.hpp"

namespace sentinel {

enum class ThresholdMode { Otsu, FixedFraction };
enum class Connectivity { Face6, FaceEdgeVertex26 };

struct ContourParams {
  ThresholdMode mode = ThresholdMode::Otsu;
  double fraction = 0.5;   // used by FixedFraction only, in (0, 1)
  int closing_radius = 2;  // voxels, 0..10
  Connectivity connectivity = Connectivity::Face6;

  /// Throws Error(InvalidParams).
  void validate() const;
};

inline constexpr int kHistogramBins = 256;

/// Otsu threshold over a 256-bin histogram spanning [min, max] of v.
/// Returns the upper edge of the last bin of the lower class; foreground is
/// v > threshold. Throws Error(DegenerateHistogram) when all values are equal.
double otsu_threshold(const Volume& v);

/// Threshold selected by params: Otsu, or fraction * max(v).
double contour_threshold(const Volume& v, const ContourParams& params);

/// Voxels strictly above t.
Mask threshold_mask(const Volume& v, double t);

/// Largest connected component; ties go to the component met first in
/// x-fastest scan order. An empty mask is returned unchanged.
Mask largest_component(const Mask& m, Connectivity connectivity);

/// Binary dilation/erosion with the discrete ball {d : |d|^2 <= r^2}.
/// Voxels outside the grid are ignored (they neither add foreground during
/// dilation nor remove it during erosion), which keeps closing extensive.
Mask dilate(const Mask& m, int radius);
Mask erode(const Mask& m, int radius);
Mask close(const Mask& m, int radius);

/// Sets every false voxel that cannot reach the grid border through false
/// voxels (under `connectivity`) to true.
Mask fill_cavities(const Mask& m, Connectivity connectivity);

/// Threshold, keep largest component, close, fill cavities.
/// Throws Error(NoForeground) if nothing passes the threshold and
/// Error(InvalidArgument) unless mr carries MR semantics.
Mask extract_body_contour(const Volume& mr, const ContourParams& params = {});

/// Dice overlap 2|A∩B| / (|A|+|B|). Returns 1 for two empty masks.
double dice(const Mask& a, const Mask& b);

}  // namespace sentinel
