#include "sentinel/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <fmt/format.h>

#include "sentinel/error.hpp"
#include "sentinel/random.hpp"

namespace sentinel {

namespace {

std::array<double, 3> centre_of(const std::array<int, 3>& dims) {
  return {(dims[0] - 1) * 0.5, (dims[1] - 1) * 0.5, (dims[2] - 1) * 0.5};
}

bool inside(const std::array<double, 3>& p, const std::array<double, 3>& c, const std::array<double, 3>& r) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - c[a]) / r[a];
    s += u * u;
  }
  return s <= 1.0;
}

std::array<double, 3> array_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::InvalidSpec, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) w[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= total;
  return w;
}

// Smooths `field` in place along one axis with a normalized Gaussian and
// reflected borders. Returns, per position along the axis, the variance gain
// of the effective kernel: reflection folds weights onto repeated samples, so
// the gain near a border exceeds sum(w^2).
std::vector<double> smooth_axis(std::vector<float>& field, const VoxelGrid& grid, int axis, double sigma) {
  const int n = grid.dims[axis];
  if (sigma <= 0.0) return std::vector<double>(n, 1.0);
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int other_a = axis == 0 ? 1 : 0;
  const int other_b = axis == 2 ? 1 : 2;
  std::vector<float> line(n), out(n);
  std::array<int, 3> p{};
  for (int b = 0; b < grid.dims[other_b]; ++b) {
    for (int a = 0; a < grid.dims[other_a]; ++a) {
      p[other_a] = a;
      p[other_b] = b;
      for (int q = 0; q < n; ++q) {
        p[axis] = q;
        line[q] = field[grid.index(p[0], p[1], p[2])];
      }
      for (int q = 0; q < n; ++q) {
        double acc = 0.0;
        if (q - radius >= 0 && q + radius < n) {
          const float* src = line.data() + (q - radius);
          for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * src[k];
        } else {
          for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * line[reflect(q + k, n)];
        }
        out[q] = static_cast<float>(acc);
      }
      for (int q = 0; q < n; ++q) {
        p[axis] = q;
        field[grid.index(p[0], p[1], p[2])] = out[q];
      }
    }
  }
  std::vector<double> gain(n), folded(n);
  for (int q = 0; q < n; ++q) {
    std::fill(folded.begin(), folded.end(), 0.0);
    for (int k = -radius; k <= radius; ++k) folded[reflect(q + k, n)] += kernel[k + radius];
    for (double w : folded) gain[q] += w * w;
  }
  return gain;
}

int through_axis(Plane plane) {
  switch (plane) {
    case Plane::Axial: return 2;
    case Plane::Coronal: return 1;
    case Plane::Sagittal: return 0;
  }
  return 2;
}

double in_body_median(const Volume& v, const Mask& body) {
  std::vector<float> values;
  values.reserve(body.count());
  const auto data = v.values();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (body[i]) values.push_back(data[i]);
  }
  if (values.empty()) throw Error(ErrorKind::EmptyMask, "body mask selects no voxels");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 32) throw Error(ErrorKind::InvalidSpec, fmt::format("phantom dimension {} must be >= 32", a));
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw Error(ErrorKind::InvalidSpec, "phantom spacing must be finite and > 0");
    }
    if (!(scalp_radii[a] > skull_radii[a] && skull_radii[a] > brain_radii[a] && brain_radii[a] > 0.0)) {
      throw Error(ErrorKind::InvalidSpec, "layer radii must be strictly nested: scalp > skull > brain > 0");
    }
    if (!(cavity_radii[a] > 0.0)) throw Error(ErrorKind::InvalidSpec, "cavity radii must be > 0");
    if (std::abs(cavity_offset[a]) + cavity_radii[a] >= brain_radii[a]) {
      throw Error(ErrorKind::InvalidSpec, "cavity must lie inside the brain");
    }
  }
  if (!(mr_noise_std >= 0.0) || !(ct_noise_std >= 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "noise standard deviations must be >= 0");
  }
}

nlohmann::ordered_json to_json(const PhantomSpec& spec) {
  nlohmann::ordered_json j;
  j["dims"] = spec.dims;
  j["spacing"] = spec.spacing;
  j["scalp_radii"] = spec.scalp_radii;
  j["skull_radii"] = spec.skull_radii;
  j["brain_radii"] = spec.brain_radii;
  j["cavity_radii"] = spec.cavity_radii;
  j["cavity_offset"] = spec.cavity_offset;
  j["mr"] = {{"air", spec.mr_air}, {"scalp", spec.mr_scalp}, {"skull", spec.mr_skull}, {"brain", spec.mr_brain}};
  j["hu"] = {{"air", spec.hu_air}, {"scalp", spec.hu_scalp}, {"skull", spec.hu_skull}, {"brain", spec.hu_brain}};
  j["mr_noise_std"] = spec.mr_noise_std;
  j["ct_noise_std"] = spec.ct_noise_std;
  j["seed"] = spec.seed;
  return j;
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j, PhantomSpec spec) {
  try {
    if (j.contains("dims")) {
      const auto d = array_from(j["dims"]);
      spec.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
    }
    if (j.contains("spacing")) spec.spacing = array_from(j["spacing"]);
    if (j.contains("scalp_radii")) spec.scalp_radii = array_from(j["scalp_radii"]);
    if (j.contains("skull_radii")) spec.skull_radii = array_from(j["skull_radii"]);
    if (j.contains("brain_radii")) spec.brain_radii = array_from(j["brain_radii"]);
    if (j.contains("cavity_radii")) spec.cavity_radii = array_from(j["cavity_radii"]);
    if (j.contains("cavity_offset")) spec.cavity_offset = array_from(j["cavity_offset"]);
    auto layers = [](const nlohmann::json& t, float& air, float& scalp, float& skull, float& brain) {
      air = t.value("air", air);
      scalp = t.value("scalp", scalp);
      skull = t.value("skull", skull);
      brain = t.value("brain", brain);
    };
    if (j.contains("mr")) layers(j["mr"], spec.mr_air, spec.mr_scalp, spec.mr_skull, spec.mr_brain);
    if (j.contains("hu")) layers(j["hu"], spec.hu_air, spec.hu_scalp, spec.hu_skull, spec.hu_brain);
    spec.mr_noise_std = j.value("mr_noise_std", spec.mr_noise_std);
    spec.ct_noise_std = j.value("ct_noise_std", spec.ct_noise_std);
    spec.seed = j.value("seed", spec.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, fmt::format("malformed phantom spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

PhantomSpec resize_spec(const PhantomSpec& spec, int size) {
  if (size < 32) throw Error(ErrorKind::InvalidSpec, fmt::format("phantom size {} is below 32", size));
  const double f = static_cast<double>(size) / spec.dims[0];
  PhantomSpec out = spec;
  out.dims = {size, size, size};
  for (int a = 0; a < 3; ++a) {
    out.scalp_radii[a] *= f;
    out.skull_radii[a] *= f;
    out.brain_radii[a] *= f;
    out.cavity_radii[a] *= f;
    out.cavity_offset[a] *= f;
  }
  return out;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const VoxelGrid grid = make_grid(spec.dims, spec.spacing);
  const auto c = centre_of(spec.dims);
  const std::array<double, 3> cavity_centre{c[0] + spec.cavity_offset[0], c[1] + spec.cavity_offset[1],
                                            c[2] + spec.cavity_offset[2]};

  const std::size_t n = grid.voxel_count();
  std::vector<float> mr(n), ct(n);
  std::vector<std::uint8_t> body(n), brain(n);
  SplitMix64 mr_noise(derive_seed(spec.seed, 0, "mr_noise"));
  SplitMix64 ct_noise(derive_seed(spec.seed, 0, "ct_noise"));

  for (int z = 0; z < spec.dims[2]; ++z) {
    for (int y = 0; y < spec.dims[1]; ++y) {
      for (int x = 0; x < spec.dims[0]; ++x) {
        const std::array<double, 3> p{double(x), double(y), double(z)};
        const std::size_t i = grid.index(x, y, z);
        float m = spec.mr_air, h = spec.hu_air;
        if (inside(p, c, spec.scalp_radii)) {
          body[i] = 1;
          if (!inside(p, c, spec.skull_radii)) {
            m = spec.mr_scalp, h = spec.hu_scalp;
          } else if (!inside(p, c, spec.brain_radii)) {
            m = spec.mr_skull, h = spec.hu_skull;
          } else if (inside(p, cavity_centre, spec.cavity_radii)) {
            m = spec.mr_air, h = spec.hu_air;
          } else {
            m = spec.mr_brain, h = spec.hu_brain;
            brain[i] = 1;
          }
        }
        // Draw both noise values for every voxel so the fields do not depend
        // on the noise level being zero or not.
        const double mn = mr_noise.normal();
        const double cn = ct_noise.normal();
        mr[i] = static_cast<float>(m + spec.mr_noise_std * mn);
        ct[i] = static_cast<float>(h + spec.ct_noise_std * cn);
      }
    }
  }
  return Phantom{Volume(grid, std::move(mr), Semantics::MrIntensityArbitrary),
                 Volume(grid, std::move(ct), Semantics::HounsfieldUnits), Mask(grid, std::move(body)),
                 Mask(grid, std::move(brain))};
}

void ShiftMode::validate() const {
  switch (kind) {
    case ShiftKind::InDist:
      return;
    case ShiftKind::ContrastAgent:
      if (!(boost_factor > 1.0) || !std::isfinite(boost_factor)) {
        throw Error(ErrorKind::InvalidSpec, "contrast boost factor must be > 1");
      }
      if (!(region_fraction > 0.0 && region_fraction <= 0.2)) {
        throw Error(ErrorKind::InvalidSpec, "contrast region fraction must lie in (0, 0.2]");
      }
      return;
    case ShiftKind::ScannerShift:
      if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidSpec, "gamma must be > 0");
      if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
        throw Error(ErrorKind::InvalidSpec, "noise scale must be > 0");
      }
      return;
  }
}

std::string_view shift_kind_name(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::InDist: return "InDist";
    case ShiftKind::ContrastAgent: return "ContrastAgent";
    case ShiftKind::ScannerShift: return "ScannerShift";
  }
  return "Unknown";
}

nlohmann::ordered_json to_json(const ShiftMode& mode) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(shift_kind_name(mode.kind));
  if (mode.kind == ShiftKind::ContrastAgent) {
    j["boost_factor"] = mode.boost_factor;
    j["region_fraction"] = mode.region_fraction;
  } else if (mode.kind == ShiftKind::ScannerShift) {
    j["gamma"] = mode.gamma;
    j["noise_scale"] = mode.noise_scale;
  }
  return j;
}

Mask contrast_region(const Mask& brain, double region_fraction, std::uint64_t seed) {
  const VoxelGrid& grid = brain.grid();
  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < brain.size(); ++i) {
    if (brain[i]) voxels.push_back(i);
  }
  if (voxels.empty()) throw Error(ErrorKind::EmptyMask, "contrast region needs a non-empty brain mask");

  SplitMix64 rng(seed);
  const std::size_t centre = voxels[static_cast<std::size_t>(rng.uniform() * voxels.size())];
  const int cx = static_cast<int>(centre % grid.dims[0]);
  const int cy = static_cast<int>((centre / grid.dims[0]) % grid.dims[1]);
  const int cz = static_cast<int>(centre / (static_cast<std::size_t>(grid.dims[0]) * grid.dims[1]));

  std::vector<std::pair<std::int64_t, std::size_t>> keyed;
  keyed.reserve(voxels.size());
  for (std::size_t i : voxels) {
    const std::int64_t dx = static_cast<std::int64_t>(i % grid.dims[0]) - cx;
    const std::int64_t dy = static_cast<std::int64_t>((i / grid.dims[0]) % grid.dims[1]) - cy;
    const std::int64_t dz =
        static_cast<std::int64_t>(i / (static_cast<std::size_t>(grid.dims[0]) * grid.dims[1])) - cz;
    keyed.emplace_back(dx * dx + dy * dy + dz * dz, i);
  }
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(region_fraction * voxels.size())));
  std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(take - 1), keyed.end());

  std::vector<std::uint8_t> bits(brain.size(), 0);
  for (std::size_t k = 0; k < take; ++k) bits[keyed[k].second] = 1;
  return Mask(grid, std::move(bits));
}

Volume apply_shift(const Volume& mr, const ShiftMode& mode, const Mask& brain, std::uint64_t seed) {
  mode.validate();
  switch (mode.kind) {
    case ShiftKind::InDist:
      return mr;
    case ShiftKind::ContrastAgent: {
      require_compatible(mr.grid(), brain.grid(), "contrast region");
      const Mask region = contrast_region(brain, mode.region_fraction, seed);
      std::vector<float> out(mr.values().begin(), mr.values().end());
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (region[i]) out[i] = static_cast<float>(out[i] * mode.boost_factor);
      }
      return Volume(mr.grid(), std::move(out), mr.semantics());
    }
    case ShiftKind::ScannerShift: {
      const auto values = mr.values();
      const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
      const double lo = *lo_it, hi = *hi_it;
      if (!(hi > lo)) return mr;
      std::vector<float> out(values.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double u = (values[i] - lo) / (hi - lo);
        out[i] = static_cast<float>(lo + (hi - lo) * std::pow(u, mode.gamma));
      }
      return Volume(mr.grid(), std::move(out), mr.semantics());
    }
  }
  return mr;
}

std::string_view plane_name(Plane plane) {
  switch (plane) {
    case Plane::Axial: return "axial";
    case Plane::Coronal: return "coronal";
    case Plane::Sagittal: return "sagittal";
  }
  return "unknown";
}

void StubErrorModel::validate() const {
  if (!(base_error_std >= 0.0) || !std::isfinite(base_error_std)) {
    throw Error(ErrorKind::InvalidSpec, "base error std must be finite and >= 0");
  }
  if (!(shift_sensitivity >= 0.0) || !std::isfinite(shift_sensitivity)) {
    throw Error(ErrorKind::InvalidSpec, "shift sensitivity must be finite and >= 0");
  }
  if (!(correlation_length >= 0.0) || correlation_length > 50.0) {
    throw Error(ErrorKind::InvalidSpec, "correlation length must lie in [0, 50] voxels");
  }
}

nlohmann::ordered_json to_json(const StubErrorModel& model) {
  nlohmann::ordered_json j;
  j["plane"] = std::string(plane_name(model.plane));
  j["base_error_std"] = model.base_error_std;
  j["shift_sensitivity"] = model.shift_sensitivity;
  j["correlation_length"] = model.correlation_length;
  j["seed"] = model.seed;
  return j;
}

double shift_magnitude(const Volume& mr_shifted, const Volume& mr_reference, const Mask& body) {
  require_compatible(mr_shifted.grid(), mr_reference.grid(), "shift magnitude");
  require_compatible(mr_shifted.grid(), body.grid(), "shift magnitude mask");
  const double med_shifted = in_body_median(mr_shifted, body);
  const double med_reference = in_body_median(mr_reference, body);
  if (med_shifted == 0.0 || med_reference == 0.0) {
    throw Error(ErrorKind::InvalidArgument, "in-body median intensity is zero; cannot normalize");
  }
  const auto a = mr_shifted.values(), b = mr_reference.values();
  CompensatedSum sum;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!body[i]) continue;
    sum.add(std::abs(a[i] / med_shifted - b[i] / med_reference));
    ++n;
  }
  return sum.value() / static_cast<double>(n);
}

std::vector<float> correlated_noise(const VoxelGrid& grid, const StubErrorModel& model) {
  model.validate();
  std::vector<float> field(grid.voxel_count());
  SplitMix64 rng(model.seed);
  for (auto& x : field) x = static_cast<float>(rng.normal());

  const int through = through_axis(model.plane);
  std::array<std::vector<double>, 3> gain;
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = axis == through ? model.correlation_length * kThroughPlaneRatio : model.correlation_length;
    gain[axis] = smooth_axis(field, grid, axis, sigma);
  }
  // separable smoothing of white noise: variance is the product of the axis gains
  for (int z = 0; z < grid.dims[2]; ++z) {
    for (int y = 0; y < grid.dims[1]; ++y) {
      const double gyz = gain[1][y] * gain[2][z];
      for (int x = 0; x < grid.dims[0]; ++x) {
        auto& v = field[grid.index(x, y, z)];
        v = static_cast<float>(v / std::sqrt(gain[0][x] * gyz));
      }
    }
  }
  return field;
}

Volume stub_generate(const Volume& ct, const Volume& mr_shifted, const Volume& mr_reference, const Mask& body,
                     const StubErrorModel& model) {
  model.validate();
  require_compatible(ct.grid(), mr_shifted.grid(), "stub input MR");
  require_compatible(ct.grid(), mr_reference.grid(), "stub reference MR");
  require_compatible(ct.grid(), body.grid(), "stub body mask");
  if (model.base_error_std == 0.0) return ct;

  const double d = shift_magnitude(mr_shifted, mr_reference, body);
  const double sd = model.base_error_std * (1.0 + model.shift_sensitivity * d);
  const auto field = correlated_noise(ct.grid(), model);
  const auto base = ct.values();
  std::vector<float> out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(base[i] + sd * field[i]);
  return Volume(ct.grid(), std::move(out), Semantics::HounsfieldUnits);
}

}  // namespace sentinel
