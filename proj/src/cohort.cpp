#include "sentinel/cohort.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sentinel/ensemble.hpp"
#include "sentinel/error.hpp"
#include "sentinel/parallel.hpp"
#include "sentinel/qc_stats.hpp"
#include "sentinel/random.hpp"
#include "sentinel/volume_io.hpp"

namespace sentinel {

namespace {

constexpr std::array<const char*, 3> kStubStreams{"stub_axial", "stub_coronal", "stub_sagittal"};
constexpr std::array<Plane, 3> kPlanes{Plane::Axial, Plane::Coronal, Plane::Sagittal};

std::array<double, 3> scaled(std::array<double, 3> v, double s) {
  for (auto& x : v) x *= s;
  return v;
}

ShiftMode shift_mode_from_json(const nlohmann::json& j, ShiftMode mode) {
  if (j.contains("boost_factor")) mode.boost_factor = j["boost_factor"].get<double>();
  if (j.contains("region_fraction")) mode.region_fraction = j["region_fraction"].get<double>();
  if (j.contains("gamma")) mode.gamma = j["gamma"].get<double>();
  if (j.contains("noise_scale")) mode.noise_scale = j["noise_scale"].get<double>();
  return mode;
}

}  // namespace

ShiftKind parse_shift_kind(std::string_view name) {
  for (ShiftKind k : {ShiftKind::InDist, ShiftKind::ContrastAgent, ShiftKind::ScannerShift}) {
    if (shift_kind_name(k) == name) return k;
  }
  throw Error(ErrorKind::MalformedCase, fmt::format("unknown cohort '{}'", name));
}

void CohortConfig::validate() const {
  spec.validate();
  if (n_in_dist < 2 || n_contrast < 2 || n_scanner < 2) {
    throw Error(ErrorKind::InvalidSpec, "every cohort needs at least 2 cases");
  }
  if (contrast.kind != ShiftKind::ContrastAgent || scanner.kind != ShiftKind::ScannerShift) {
    throw Error(ErrorKind::InvalidSpec, "cohort shift modes must be ContrastAgent and ScannerShift");
  }
  contrast.validate();
  scanner.validate();
  if (!(head_scale_jitter >= 0.0 && head_scale_jitter < 0.5) || !(noise_jitter >= 0.0 && noise_jitter < 1.0)) {
    throw Error(ErrorKind::InvalidSpec, "jitter must lie in [0, 0.5) for head scale and [0, 1) for noise");
  }
  for (int a = 0; a < 3; ++a) {
    if (spec.scalp_radii[a] * (1.0 + head_scale_jitter) >= (spec.dims[a] - 1) * 0.5 - 1.0) {
      throw Error(ErrorKind::InvalidSpec, "jittered head does not fit inside the grid");
    }
  }
  StubErrorModel probe{Plane::Axial, base_error_std, shift_sensitivity, correlation_length, 0};
  probe.validate();
}

nlohmann::ordered_json to_json(const CohortConfig& config) {
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["counts"] = {{"InDist", config.n_in_dist},
                 {"ContrastAgent", config.n_contrast},
                 {"ScannerShift", config.n_scanner}};
  j["contrast"] = to_json(config.contrast);
  j["scanner"] = to_json(config.scanner);
  j["base_error_std"] = config.base_error_std;
  j["shift_sensitivity"] = config.shift_sensitivity;
  j["correlation_length"] = config.correlation_length;
  j["head_scale_jitter"] = config.head_scale_jitter;
  j["noise_jitter"] = config.noise_jitter;
  j["phantom"] = to_json(config.spec);
  return j;
}

CohortConfig cohort_config_from_json(const nlohmann::json& j, CohortConfig config) {
  try {
    config.seed = j.value("seed", config.seed);
    if (j.contains("counts")) {
      const auto& c = j["counts"];
      config.n_in_dist = c.value("InDist", config.n_in_dist);
      config.n_contrast = c.value("ContrastAgent", config.n_contrast);
      config.n_scanner = c.value("ScannerShift", config.n_scanner);
    }
    if (j.contains("contrast")) config.contrast = shift_mode_from_json(j["contrast"], config.contrast);
    if (j.contains("scanner")) config.scanner = shift_mode_from_json(j["scanner"], config.scanner);
    config.base_error_std = j.value("base_error_std", config.base_error_std);
    config.shift_sensitivity = j.value("shift_sensitivity", config.shift_sensitivity);
    config.correlation_length = j.value("correlation_length", config.correlation_length);
    config.head_scale_jitter = j.value("head_scale_jitter", config.head_scale_jitter);
    config.noise_jitter = j.value("noise_jitter", config.noise_jitter);
    if (j.contains("phantom")) config.spec = phantom_spec_from_json(j["phantom"], config.spec);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, fmt::format("malformed cohort config: {}", e.what()));
  }
  config.validate();
  return config;
}

std::vector<CaseInfo> plan_cohorts(const CohortConfig& config) {
  config.validate();
  const int total = config.n_in_dist + config.n_contrast + config.n_scanner;
  std::vector<CaseInfo> cases;
  cases.reserve(total);
  for (int index = 0; index < total; ++index) {
    CaseInfo info;
    info.index = index;
    info.case_id = fmt::format("{:03d}", index);
    if (index < config.n_in_dist) {
      info.cohort = ShiftKind::InDist;
      info.mode = ShiftMode::in_dist();
    } else if (index < config.n_in_dist + config.n_contrast) {
      info.cohort = ShiftKind::ContrastAgent;
      info.mode = config.contrast;
    } else {
      info.cohort = ShiftKind::ScannerShift;
      info.mode = config.scanner;
    }
    // Mirrors the external scanner cohort, which has no reference CT.
    info.reference_ct_available = info.cohort != ShiftKind::ScannerShift;

    const auto uindex = static_cast<std::uint64_t>(index);
    SplitMix64 geometry(derive_seed(config.seed, uindex, "geometry"));
    const double head_scale = 1.0 + config.head_scale_jitter * (2.0 * geometry.uniform() - 1.0);
    const double noise_factor = 1.0 + config.noise_jitter * (2.0 * geometry.uniform() - 1.0);

    PhantomSpec spec = config.spec;
    spec.scalp_radii = scaled(spec.scalp_radii, head_scale);
    spec.skull_radii = scaled(spec.skull_radii, head_scale);
    spec.brain_radii = scaled(spec.brain_radii, head_scale);
    spec.cavity_radii = scaled(spec.cavity_radii, head_scale);
    spec.cavity_offset = scaled(spec.cavity_offset, head_scale);
    spec.mr_noise_std *= noise_factor;
    if (info.cohort == ShiftKind::ScannerShift) spec.mr_noise_std *= info.mode.noise_scale;
    spec.seed = derive_seed(config.seed, uindex, "phantom");
    info.spec = spec;

    info.contrast_seed = derive_seed(config.seed, uindex, "contrast_blob");
    for (int k = 0; k < 3; ++k) {
      info.stubs[k] = StubErrorModel{kPlanes[k], config.base_error_std, config.shift_sensitivity,
                                     config.correlation_length, derive_seed(config.seed, uindex, kStubStreams[k])};
    }
    cases.push_back(std::move(info));
  }
  return cases;
}

nlohmann::ordered_json case_meta(const CaseInfo& info) {
  nlohmann::ordered_json j;
  j["case_id"] = info.case_id;
  j["cohort"] = std::string(shift_kind_name(info.cohort));
  j["shift_mode"] = to_json(info.mode);
  j["reference_ct_available"] = info.reference_ct_available;
  j["seeds"] = {{"phantom", info.spec.seed},
                {"contrast_blob", info.contrast_seed},
                {"stub_axial", info.stubs[0].seed},
                {"stub_coronal", info.stubs[1].seed},
                {"stub_sagittal", info.stubs[2].seed}};
  j["spec"] = to_json(info.spec);
  nlohmann::ordered_json stubs = nlohmann::ordered_json::array();
  for (const auto& s : info.stubs) stubs.push_back(to_json(s));
  j["stubs"] = stubs;
  return j;
}

SimulatedCase simulate_case(const CaseInfo& info) {
  Phantom phantom = generate_phantom(info.spec);
  PhantomSpec clean = info.spec;
  clean.mr_noise_std = 0.0;
  const Volume reference_mr = generate_phantom(clean).mr;
  Volume mr = apply_shift(phantom.mr, info.mode, phantom.brain, info.contrast_seed);
  const double d = shift_magnitude(mr, reference_mr, phantom.body);

  auto generate = [&](int k) { return stub_generate(phantom.ct, mr, reference_mr, phantom.body, info.stubs[k]); };
  std::array<Volume, 3> sct{generate(0), generate(1), generate(2)};
  return SimulatedCase{info, std::move(mr), std::move(phantom.ct), std::move(sct), std::move(phantom.body), d};
}

std::filesystem::path case_directory(const std::filesystem::path& root, const std::string& case_id) {
  return root / ("case_" + case_id);
}

void write_case(const SimulatedCase& c, const std::filesystem::path& root) {
  const auto dir = case_directory(root, c.info.case_id);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  write_volume(c.mr, dir / "mr.nii");
  write_volume(c.ct, dir / "ct.nii");
  for (int k = 0; k < 3; ++k) write_volume(c.sct[k], dir / kMemberFiles[k]);
  write_text_file(dir / "meta.json", case_meta(c.info).dump(2) + "\n");
}

void simulate_to_directory(const CohortConfig& config, const std::filesystem::path& root, int jobs) {
  const auto cases = plan_cohorts(config);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::IoFailure, fmt::format("cannot create {}: {}", root.string(), ec.message()));
  write_text_file(root / "cohort.json", to_json(config).dump(2) + "\n");
  parallel_for(cases.size(), jobs, [&](std::size_t i) { write_case(simulate_case(cases[i]), root); });
}

CaseEvaluation evaluate_case(std::string case_id, ShiftKind cohort, std::span<const Volume> members, const Volume& mr,
                             const std::optional<Volume>& reference_ct, const EvaluationOptions& options) {
  std::vector<Volume> ingested;
  ingested.reserve(members.size());
  for (const auto& m : members) ingested.push_back(clamp_to_hu_range(m));
  EnsembleRun run = run_ensemble(ingested, mr, options.contour);

  CaseMetrics metrics{std::move(case_id), cohort, run.mean_uncertainty, std::nullopt};
  if (reference_ct) {
    const Volume ref = clamp_to_hu_range(*reference_ct);
    metrics.mae = options.mae_full_volume ? mae_full_volume(run.result.fused, ref)
                                          : mae_within_mask(run.result.fused, ref, run.body);
  }
  return CaseEvaluation{std::move(metrics), std::move(run.result.fused), std::move(run.result.uncertainty),
                        std::move(run.body)};
}

std::vector<CaseMetrics> evaluate_simulation(const CohortConfig& config, const EvaluationOptions& options, int jobs) {
  const auto cases = plan_cohorts(config);
  std::vector<std::optional<CaseMetrics>> slots(cases.size());
  parallel_for(cases.size(), jobs, [&](std::size_t i) {
    const SimulatedCase c = simulate_case(cases[i]);
    std::optional<Volume> ref;
    if (c.info.reference_ct_available) ref = c.ct;
    slots[i] = evaluate_case(c.info.case_id, c.info.cohort, c.sct, c.mr, ref, options).metrics;
  });
  std::vector<CaseMetrics> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

LoadedCase load_case(const std::filesystem::path& case_dir) {
  if (!std::filesystem::is_directory(case_dir)) {
    throw Error(ErrorKind::InputNotFound, fmt::format("case directory not found: {}", case_dir.string()));
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(case_dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedCase, fmt::format("{}: bad meta.json: {}", case_dir.string(), e.what()));
  }
  if (!meta.is_object() || !meta.contains("case_id") || !meta.contains("cohort") ||
      !meta.contains("reference_ct_available") || !meta["case_id"].is_string() || !meta["cohort"].is_string() ||
      !meta["reference_ct_available"].is_boolean()) {
    throw Error(ErrorKind::MalformedCase,
                fmt::format("{}: meta.json needs case_id, cohort and reference_ct_available", case_dir.string()));
  }
  std::vector<Volume> members;
  for (const char* name : kMemberFiles) {
    members.push_back(read_volume(case_dir / name, Semantics::HounsfieldUnits));
  }
  std::optional<Volume> ref;
  if (meta["reference_ct_available"].get<bool>()) ref = read_volume(case_dir / "ct.nii", Semantics::HounsfieldUnits);
  return LoadedCase{meta["case_id"].get<std::string>(), parse_shift_kind(meta["cohort"].get<std::string>()),
                    read_volume(case_dir / "mr.nii", Semantics::MrIntensityArbitrary), std::move(members),
                    std::move(ref)};
}

std::vector<std::filesystem::path> list_case_directories(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw Error(ErrorKind::InputNotFound, fmt::format("cohort directory not found: {}", root.string()));
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("case_", 0) == 0) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<CaseMetrics> evaluate_cohort_directory(const std::filesystem::path& root, const EvaluationOptions& options,
                                                   int jobs) {
  const auto dirs = list_case_directories(root);
  std::vector<std::optional<CaseMetrics>> slots(dirs.size());
  parallel_for(dirs.size(), jobs, [&](std::size_t i) {
    const LoadedCase c = load_case(dirs[i]);
    slots[i] = evaluate_case(c.case_id, c.cohort, c.members, c.mr, c.reference_ct, options).metrics;
  });
  std::vector<CaseMetrics> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace sentinel
