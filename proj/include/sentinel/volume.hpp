#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sentinel {

inline constexpr float kHuMin = -1024.0f;
inline constexpr float kHuMax = 3071.0f;

/// Regular voxel grid. Values are stored x-fastest: index = x + nx*(y + ny*z).
struct VoxelGrid {
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm
  std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }
};

/// Builds a grid and validates it (dims >= 1, spacing finite and > 0).
/// Throws Error(InvalidGrid).
VoxelGrid make_grid(std::array<int, 3> dims, std::array<double, 3> spacing = {1.0, 1.0, 1.0},
                    std::array<double, 3> origin = {0.0, 0.0, 0.0});

void validate_grid(const VoxelGrid& grid);

/// Equal dims, spacing within 1e-6 mm, origin within 1e-3 mm.
bool check_compatible(const VoxelGrid& a, const VoxelGrid& b);

/// Throws Error(IncompatibleGrids) naming `what` when check_compatible fails.
void require_compatible(const VoxelGrid& a, const VoxelGrid& b, const char* what);

enum class Semantics { HounsfieldUnits, MrIntensityArbitrary };

/// Dense float32 scalar field. Immutable once built; every value is finite.
class Volume {
 public:
  /// Throws Error(InvalidGrid) on a bad grid or length mismatch and
  /// Error(NonFiniteInput) when any value is NaN/Inf.
  Volume(VoxelGrid grid, std::vector<float> values, Semantics semantics);

  static Volume filled(const VoxelGrid& grid, float value, Semantics semantics);

  const VoxelGrid& grid() const { return grid_; }
  Semantics semantics() const { return semantics_; }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  float at(int x, int y, int z) const { return values_[grid_.index(x, y, z)]; }
  std::size_t size() const { return values_.size(); }

 private:
  VoxelGrid grid_;
  std::vector<float> values_;
  Semantics semantics_;
};

class Mask {
 public:
  /// bits holds 0/1 per voxel; any non-zero byte is normalized to 1.
  Mask(VoxelGrid grid, std::vector<std::uint8_t> bits);

  static Mask filled(const VoxelGrid& grid, bool value);

  const VoxelGrid& grid() const { return grid_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(int x, int y, int z) const { return bits_[grid_.index(x, y, z)] != 0; }
  std::size_t size() const { return bits_.size(); }
  std::size_t count() const;

  friend bool operator==(const Mask& a, const Mask& b) { return a.bits_ == b.bits_; }

 private:
  VoxelGrid grid_;
  std::vector<std::uint8_t> bits_;
};

/// Clamps HU values into [kHuMin, kHuMax]. Applied on ingest only.
/// Throws Error(InvalidArgument) unless v carries HU semantics.
Volume clamp_to_hu_range(const Volume& v);

struct MaskedStats {
  double mean = 0.0;
  double std = 0.0;  // population (divide by n)
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Statistics over exactly the voxels where m is true. Mean and variance use
/// compensated summation in double precision.
MaskedStats stats_within_mask(const Volume& v, const Mask& m);

/// Neumaier-compensated accumulator shared by the reductions in this library.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// Float32 view of a mask (0/1), for writing masks through the volume I/O.
Volume mask_to_volume(const Mask& m);
/// Voxels > 0.5 become true.
Mask volume_to_mask(const Volume& v);

}  // namespace sentinel
