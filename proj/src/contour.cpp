#include "sentinel/contour.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "sentinel/error.hpp"

namespace sentinel {

namespace {

using Offset = std::array<int, 3>;

std::vector<Offset> neighbor_offsets(Connectivity connectivity) {
  std::vector<Offset> offsets;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::Face6 && manhattan != 1) continue;
        offsets.push_back({dx, dy, dz});
      }
    }
  }
  return offsets;
}

constexpr double kFar = 1e20;

// Exact 1D squared distance transform (lower envelope of parabolas).
void distance_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                 std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared Euclidean distance from every voxel to the nearest true voxel of
// `bits` (kFar-ish where none exist), separable over the three axes.
std::vector<double> squared_distance_to(const VoxelGrid& grid, std::span<const std::uint8_t> bits) {
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  std::vector<double> dist(grid.voxel_count());
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = bits[i] ? 0.0 : kFar;

  const int longest = std::max({nx, ny, nz});
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<int> v(longest);

  auto pass = [&](int n, auto&& line_index, int count_a, int count_b) {
    for (int b = 0; b < count_b; ++b) {
      for (int a = 0; a < count_a; ++a) {
        for (int q = 0; q < n; ++q) f[q] = dist[line_index(a, b, q)];
        distance_1d(f, d, v, z, n);
        for (int q = 0; q < n; ++q) dist[line_index(a, b, q)] = d[q];
      }
    }
  };
  pass(nx, [&](int y, int zz, int x) { return grid.index(x, y, zz); }, ny, nz);
  pass(ny, [&](int x, int zz, int y) { return grid.index(x, y, zz); }, nx, nz);
  pass(nz, [&](int x, int y, int zz) { return grid.index(x, y, zz); }, nx, ny);
  return dist;
}

void check_radius(int radius) {
  if (radius < 0) throw Error(ErrorKind::InvalidParams, fmt::format("negative radius {}", radius));
}

}  // namespace

void ContourParams::validate() const {
  if (mode == ThresholdMode::FixedFraction && !(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::InvalidParams, fmt::format("fixed fraction must lie in (0, 1), got {}", fraction));
  }
  if (closing_radius < 0 || closing_radius > 10) {
    throw Error(ErrorKind::InvalidParams, fmt::format("closing radius must lie in [0, 10], got {}", closing_radius));
  }
}

double otsu_threshold(const Volume& v) {
  const auto values = v.values();
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    throw Error(ErrorKind::DegenerateHistogram, "all intensities are equal; no threshold separates them");
  }
  const double width = (hi - lo) / kHistogramBins;

  std::array<double, kHistogramBins> hist{};
  for (float x : values) {
    const int bin = std::min(kHistogramBins - 1, static_cast<int>((x - lo) / width));
    hist[bin] += 1.0;
  }

  double total = 0.0, total_moment = 0.0;
  for (int i = 0; i < kHistogramBins; ++i) {
    total += hist[i];
    total_moment += hist[i] * (i + 0.5);
  }

  double best = -1.0;
  int best_bin = 0;
  double w0 = 0.0, m0 = 0.0;
  for (int k = 0; k < kHistogramBins - 1; ++k) {
    w0 += hist[k];
    m0 += hist[k] * (k + 0.5);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = m0 / w0;
    const double mu1 = (total_moment - m0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_bin = k;
    }
  }
  return lo + (best_bin + 1) * width;
}

double contour_threshold(const Volume& v, const ContourParams& params) {
  params.validate();
  if (params.mode == ThresholdMode::Otsu) return otsu_threshold(v);
  const auto values = v.values();
  const double peak = *std::max_element(values.begin(), values.end());
  return params.fraction * peak;
}

Mask threshold_mask(const Volume& v, double t) {
  const auto values = v.values();
  std::vector<std::uint8_t> bits(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bits[i] = static_cast<double>(values[i]) > t ? 1 : 0;
  return Mask(v.grid(), std::move(bits));
}

Mask largest_component(const Mask& m, Connectivity connectivity) {
  const VoxelGrid& grid = m.grid();
  const auto bits = m.bits();
  const auto offsets = neighbor_offsets(connectivity);

  std::vector<std::int32_t> label(bits.size(), 0);
  std::vector<std::size_t> queue;
  queue.reserve(bits.size() / 4);

  std::int32_t best_label = 0;
  std::size_t best_size = 0;
  std::int32_t next = 0;

  for (std::size_t seed = 0; seed < bits.size(); ++seed) {
    if (!bits[seed] || label[seed]) continue;
    ++next;
    label[seed] = next;
    queue.clear();
    queue.push_back(seed);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t i = queue[head];
      const int x = static_cast<int>(i % grid.dims[0]);
      const int y = static_cast<int>((i / grid.dims[0]) % grid.dims[1]);
      const int z = static_cast<int>(i / (static_cast<std::size_t>(grid.dims[0]) * grid.dims[1]));
      for (const auto& o : offsets) {
        const int xx = x + o[0], yy = y + o[1], zz = z + o[2];
        if (!grid.contains(xx, yy, zz)) continue;
        const std::size_t j = grid.index(xx, yy, zz);
        if (bits[j] && !label[j]) {
          label[j] = next;
          queue.push_back(j);
        }
      }
    }
    if (queue.size() > best_size) {
      best_size = queue.size();
      best_label = next;
    }
  }

  std::vector<std::uint8_t> out(bits.size(), 0);
  if (best_label != 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = label[i] == best_label ? 1 : 0;
  }
  return Mask(grid, std::move(out));
}

Mask dilate(const Mask& m, int radius) {
  check_radius(radius);
  if (radius == 0) return m;
  const auto dist = squared_distance_to(m.grid(), m.bits());
  const double limit = double(radius) * radius;
  std::vector<std::uint8_t> out(dist.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dist[i] <= limit ? 1 : 0;
  return Mask(m.grid(), std::move(out));
}

Mask erode(const Mask& m, int radius) {
  check_radius(radius);
  if (radius == 0) return m;
  // x survives iff no in-grid background voxel lies within the ball around x.
  std::vector<std::uint8_t> background(m.size());
  const auto bits = m.bits();
  for (std::size_t i = 0; i < background.size(); ++i) background[i] = bits[i] ? 0 : 1;
  const auto dist = squared_distance_to(m.grid(), background);
  const double limit = double(radius) * radius;
  std::vector<std::uint8_t> out(dist.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dist[i] > limit ? 1 : 0;
  return Mask(m.grid(), std::move(out));
}

Mask close(const Mask& m, int radius) { return erode(dilate(m, radius), radius); }

Mask fill_cavities(const Mask& m, Connectivity connectivity) {
  const VoxelGrid& grid = m.grid();
  const auto bits = m.bits();
  const auto offsets = neighbor_offsets(connectivity);
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];

  std::vector<std::uint8_t> outside(bits.size(), 0);
  std::vector<std::size_t> queue;
  auto visit = [&](std::size_t i) {
    if (!bits[i] && !outside[i]) {
      outside[i] = 1;
      queue.push_back(i);
    }
  };
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        if (x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1) visit(grid.index(x, y, z));
      }
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t i = queue[head];
    const int x = static_cast<int>(i % nx);
    const int y = static_cast<int>((i / nx) % ny);
    const int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
    for (const auto& o : offsets) {
      const int xx = x + o[0], yy = y + o[1], zz = z + o[2];
      if (grid.contains(xx, yy, zz)) visit(grid.index(xx, yy, zz));
    }
  }

  std::vector<std::uint8_t> out(bits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = outside[i] ? 0 : 1;
  return Mask(grid, std::move(out));
}

Mask extract_body_contour(const Volume& mr, const ContourParams& params) {
  params.validate();
  if (mr.semantics() != Semantics::MrIntensityArbitrary) {
    throw Error(ErrorKind::InvalidArgument, "body contour extraction expects an MR volume");
  }
  const double t = contour_threshold(mr, params);
  Mask foreground = threshold_mask(mr, t);
  if (foreground.count() == 0) {
    throw Error(ErrorKind::NoForeground, fmt::format("no voxel exceeds the threshold {}", t));
  }
  Mask body = largest_component(foreground, params.connectivity);
  body = close(body, params.closing_radius);
  return fill_cavities(body, params.connectivity);
}

double dice(const Mask& a, const Mask& b) {
  require_compatible(a.grid(), b.grid(), "dice");
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] && b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(both) / double(na + nb);
}

}  // namespace sentinel
