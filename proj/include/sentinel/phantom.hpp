#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "sentinel/volume.hpp"

namespace sentinel {

/// Nested-ellipsoid head: scalp > skull > brain, plus an air cavity inside
/// the brain (sinus-like). Radii and offsets are in voxels; the head is
/// centred on the grid.
struct PhantomSpec {
  std::array<int, 3> dims{96, 96, 96};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  std::array<double, 3> scalp_radii{36.0, 42.0, 38.0};
  std::array<double, 3> skull_radii{33.0, 39.0, 35.0};
  std::array<double, 3> brain_radii{30.0, 36.0, 32.0};
  std::array<double, 3> cavity_radii{6.0, 5.0, 4.0};
  std::array<double, 3> cavity_offset{0.0, 20.0, -8.0};

  // MR intensities (arbitrary units).
  float mr_air = 0.0f;
  float mr_scalp = 80.0f;
  float mr_skull = 60.0f;
  float mr_brain = 100.0f;

  // CT values (HU). The cavity holds air.
  float hu_air = -1000.0f;
  float hu_scalp = 20.0f;
  float hu_skull = 700.0f;
  float hu_brain = 40.0f;

  double mr_noise_std = 4.0;
  double ct_noise_std = 10.0;
  std::uint64_t seed = 42;

  /// Throws Error(InvalidSpec).
  void validate() const;
};

nlohmann::ordered_json to_json(const PhantomSpec& spec);
/// Missing keys keep their defaults. Throws Error(InvalidSpec).
PhantomSpec phantom_spec_from_json(const nlohmann::json& j, PhantomSpec base = {});

struct Phantom {
  Volume mr;
  Volume ct;
  Mask body;   // union of all tissue layers (cavity included)
  Mask brain;  // brain ellipsoid minus cavity
};

/// Cubic grid of `size` voxels per side with radii and cavity offset scaled
/// by size / spec.dims[0]. Intensities, noise and seed are kept.
PhantomSpec resize_spec(const PhantomSpec& spec, int size);

Phantom generate_phantom(const PhantomSpec& spec);

enum class ShiftKind { InDist, ContrastAgent, ScannerShift };

struct ShiftMode {
  ShiftKind kind = ShiftKind::InDist;
  double boost_factor = 1.5;      // ContrastAgent, > 1
  double region_fraction = 0.05;  // ContrastAgent, (0, 0.2]
  double gamma = 0.5;             // ScannerShift, > 0
  double noise_scale = 1.5;       // ScannerShift, > 0

  static ShiftMode in_dist() { return {}; }
  static ShiftMode contrast_agent(double boost, double fraction) {
    return {ShiftKind::ContrastAgent, boost, fraction, 0.5, 1.5};
  }
  static ShiftMode scanner_shift(double gamma, double noise_scale) {
    return {ShiftKind::ScannerShift, 1.5, 0.05, gamma, noise_scale};
  }

  /// Throws Error(InvalidSpec).
  void validate() const;
};

std::string_view shift_kind_name(ShiftKind kind);
nlohmann::ordered_json to_json(const ShiftMode& mode);

/// InDist: identity. ContrastAgent: multiplies the region_fraction of `brain`
/// voxels nearest a seeded centre by boost_factor. ScannerShift: gamma remap
/// of intensities normalized to the volume's [min, max]; the noise rescale
/// of this mode is applied when the MR is acquired (see simulate_case).
Volume apply_shift(const Volume& mr, const ShiftMode& mode, const Mask& brain, std::uint64_t seed);

/// Voxels that ContrastAgent would enhance, exposed for tests and metadata.
Mask contrast_region(const Mask& brain, double region_fraction, std::uint64_t seed);

enum class Plane { Axial, Coronal, Sagittal };

std::string_view plane_name(Plane plane);

struct StubErrorModel {
  Plane plane = Plane::Axial;
  double base_error_std = 40.0;     // HU
  double shift_sensitivity = 10.0;  // >= 0
  double correlation_length = 5.0;  // voxels, in-plane Gaussian sigma
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const StubErrorModel& model);

/// Ratio of the through-plane to the in-plane smoothing length. Slice-wise
/// generators produce errors that vary quickly across slices.
inline constexpr double kThroughPlaneRatio = 0.2;

/// Mean |a/med(a) - b/med(b)| over `body`, med = in-body median intensity.
/// Zero when a and b are identical.
double shift_magnitude(const Volume& mr_shifted, const Volume& mr_reference, const Mask& body);

/// Unit-variance smooth noise field oriented along the model plane.
std::vector<float> correlated_noise(const VoxelGrid& grid, const StubErrorModel& model);

/// sCT = ct + sd * field, sd = base_error_std * (1 + shift_sensitivity * D),
/// D = shift_magnitude(mr_shifted, mr_reference, body). Output is not
/// clamped; clamping happens on ingest.
Volume stub_generate(const Volume& ct, const Volume& mr_shifted, const Volume& mr_reference, const Mask& body,
                     const StubErrorModel& model);

/// Expected range of three independent unit normals, 3 / sqrt(pi). For three
/// stubs with independent fields of std s the mean disagreement is about
/// kRangeOfThreeNormals * s.
inline constexpr double kRangeOfThreeNormals = 1.6925687506432689;

}  // namespace sentinel
