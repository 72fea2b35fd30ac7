#include "sentinel/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "sentinel/error.hpp"

namespace sentinel {

namespace {

constexpr double kSpacingTolerance = 1e-6;
constexpr double kOriginTolerance = 1e-3;

}  // namespace

void validate_grid(const VoxelGrid& grid) {
  for (int axis = 0; axis < 3; ++axis) {
    if (grid.dims[axis] < 1) {
      throw Error(ErrorKind::InvalidGrid, fmt::format("dimension {} must be >= 1, got {}", axis, grid.dims[axis]));
    }
    const double s = grid.spacing[axis];
    if (!std::isfinite(s) || s <= 0.0) {
      throw Error(ErrorKind::InvalidGrid, fmt::format("spacing {} must be finite and > 0, got {}", axis, s));
    }
    if (!std::isfinite(grid.origin[axis])) {
      throw Error(ErrorKind::InvalidGrid, fmt::format("origin {} must be finite", axis));
    }
  }
}

VoxelGrid make_grid(std::array<int, 3> dims, std::array<double, 3> spacing, std::array<double, 3> origin) {
  VoxelGrid grid{dims, spacing, origin};
  validate_grid(grid);
  return grid;
}

bool check_compatible(const VoxelGrid& a, const VoxelGrid& b) {
  for (int axis = 0; axis < 3; ++axis) {
    if (a.dims[axis] != b.dims[axis]) return false;
    if (std::abs(a.spacing[axis] - b.spacing[axis]) > kSpacingTolerance) return false;
    if (std::abs(a.origin[axis] - b.origin[axis]) > kOriginTolerance) return false;
  }
  return true;
}

void require_compatible(const VoxelGrid& a, const VoxelGrid& b, const char* what) {
  if (!check_compatible(a, b)) {
    throw Error(ErrorKind::IncompatibleGrids,
                fmt::format("{}: grids differ ({}x{}x{} vs {}x{}x{})", what, a.dims[0], a.dims[1], a.dims[2],
                            b.dims[0], b.dims[1], b.dims[2]));
  }
}

Volume::Volume(VoxelGrid grid, std::vector<float> values, Semantics semantics)
    : grid_(grid), values_(std::move(values)), semantics_(semantics) {
  validate_grid(grid_);
  if (values_.size() != grid_.voxel_count()) {
    throw Error(ErrorKind::InvalidGrid,
                fmt::format("value count {} does not match grid voxel count {}", values_.size(), grid_.voxel_count()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorKind::NonFiniteInput, fmt::format("non-finite value at voxel {}", i));
    }
  }
}

Volume Volume::filled(const VoxelGrid& grid, float value, Semantics semantics) {
  validate_grid(grid);
  return Volume(grid, std::vector<float>(grid.voxel_count(), value), semantics);
}

Mask::Mask(VoxelGrid grid, std::vector<std::uint8_t> bits) : grid_(grid), bits_(std::move(bits)) {
  validate_grid(grid_);
  if (bits_.size() != grid_.voxel_count()) {
    throw Error(ErrorKind::InvalidGrid,
                fmt::format("mask size {} does not match grid voxel count {}", bits_.size(), grid_.voxel_count()));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

Mask Mask::filled(const VoxelGrid& grid, bool value) {
  validate_grid(grid);
  return Mask(grid, std::vector<std::uint8_t>(grid.voxel_count(), value ? 1 : 0));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Volume clamp_to_hu_range(const Volume& v) {
  if (v.semantics() != Semantics::HounsfieldUnits) {
    throw Error(ErrorKind::InvalidArgument, "clamp_to_hu_range requires a HU volume");
  }
  std::vector<float> out(v.values().begin(), v.values().end());
  for (auto& x : out) x = std::clamp(x, kHuMin, kHuMax);
  return Volume(v.grid(), std::move(out), v.semantics());
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

MaskedStats stats_within_mask(const Volume& v, const Mask& m) {
  require_compatible(v.grid(), m.grid(), "stats_within_mask");
  const auto values = v.values();
  const auto bits = m.bits();

  MaskedStats stats;
  stats.min = std::numeric_limits<double>::infinity();
  stats.max = -std::numeric_limits<double>::infinity();
  CompensatedSum sum;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!bits[i]) continue;
    const double x = values[i];
    sum.add(x);
    stats.min = std::min(stats.min, x);
    stats.max = std::max(stats.max, x);
    ++stats.count;
  }
  if (stats.count == 0) {
    throw Error(ErrorKind::EmptyMask, "mask selects no voxels");
  }
  stats.mean = sum.value() / static_cast<double>(stats.count);

  CompensatedSum squares;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!bits[i]) continue;
    const double d = values[i] - stats.mean;
    squares.add(d * d);
  }
  stats.std = std::sqrt(squares.value() / static_cast<double>(stats.count));
  return stats;
}

Volume mask_to_volume(const Mask& m) {
  std::vector<float> values(m.size());
  const auto bits = m.bits();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = bits[i] ? 1.0f : 0.0f;
  return Volume(m.grid(), std::move(values), Semantics::MrIntensityArbitrary);
}

Mask volume_to_mask(const Volume& v) {
  std::vector<std::uint8_t> bits(v.size());
  const auto values = v.values();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = values[i] > 0.5f ? 1 : 0;
  return Mask(v.grid(), std::move(bits));
}

}  // namespace sentinel
