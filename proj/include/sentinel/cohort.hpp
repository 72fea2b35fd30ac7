#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sentinel/contour.hpp"
#include "sentinel/phantom.hpp"
#include "sentinel/volume.hpp"

namespace sentinel {

/// Everything needed to regenerate a simulated cohort bit-for-bit.
struct CohortConfig {
  PhantomSpec spec;  // per-case phantoms jitter this template
  std::uint64_t seed = 42;
  int n_in_dist = 20;
  int n_contrast = 20;
  int n_scanner = 34;
  ShiftMode contrast = ShiftMode::contrast_agent(1.5, 0.05);
  ShiftMode scanner = ShiftMode::scanner_shift(0.5, 1.5);
  double base_error_std = 40.0;
  double shift_sensitivity = 10.0;
  double correlation_length = 5.0;
  double head_scale_jitter = 0.06;  // radii scaled by U(1 - j, 1 + j)
  double noise_jitter = 0.2;        // MR noise std scaled by U(1 - j, 1 + j)

  /// Throws Error(InvalidSpec).
  void validate() const;
};

nlohmann::ordered_json to_json(const CohortConfig& config);
/// Missing keys keep the defaults of `base`.
CohortConfig cohort_config_from_json(const nlohmann::json& j, CohortConfig base = {});

/// Deterministic description of one case; cheap to build for a whole cohort.
struct CaseInfo {
  int index = 0;
  std::string case_id;
  ShiftKind cohort = ShiftKind::InDist;
  ShiftMode mode;
  PhantomSpec spec;  // after per-case jitter, noise already scaled for ScannerShift
  bool reference_ct_available = true;
  std::uint64_t contrast_seed = 0;
  std::array<StubErrorModel, 3> stubs;
};

/// Cases 0..n_in_dist-1 are InDist, then ContrastAgent, then ScannerShift.
/// Stream seeds come from derive_seed(config.seed, index, name).
std::vector<CaseInfo> plan_cohorts(const CohortConfig& config);

nlohmann::ordered_json case_meta(const CaseInfo& info);

struct SimulatedCase {
  CaseInfo info;
  Volume mr;     // acquired (shifted) MR
  Volume ct;     // reference CT
  std::array<Volume, 3> sct;  // axial, coronal, sagittal stub outputs
  Mask true_body;
  double shift_magnitude = 0.0;
};

/// Acquired MR = apply_shift(phantom MR, mode); the generators' reference is
/// the noise-free phantom MR, so acquisition noise counts as (mild) shift.
SimulatedCase simulate_case(const CaseInfo& info);

inline constexpr std::array<const char*, 3> kMemberFiles{"sct_axi.nii", "sct_cor.nii", "sct_sag.nii"};

std::filesystem::path case_directory(const std::filesystem::path& root, const std::string& case_id);

/// case_<id>/{mr,ct,sct_axi,sct_cor,sct_sag}.nii + case_<id>/meta.json
void write_case(const SimulatedCase& c, const std::filesystem::path& root);

/// Writes cohort.json and every case directory.
void simulate_to_directory(const CohortConfig& config, const std::filesystem::path& root, int jobs);

struct EvaluationOptions {
  ContourParams contour;
  bool mae_full_volume = false;  // default: MAE inside the body contour
};

struct CaseMetrics {
  std::string case_id;
  ShiftKind cohort = ShiftKind::InDist;
  double mean_uncertainty = 0.0;
  std::optional<double> mae;
};

struct CaseEvaluation {
  CaseMetrics metrics;
  Volume fused;
  Volume uncertainty;
  Mask body;
};

/// Clamps members and reference to the HU range (ingest), then runs the
/// ensemble and, when a reference is given, the MAE of the fused volume.
CaseEvaluation evaluate_case(std::string case_id, ShiftKind cohort, std::span<const Volume> members, const Volume& mr,
                             const std::optional<Volume>& reference_ct, const EvaluationOptions& options);

/// Simulates and evaluates every case in memory, in case order.
std::vector<CaseMetrics> evaluate_simulation(const CohortConfig& config, const EvaluationOptions& options, int jobs);

struct LoadedCase {
  std::string case_id;
  ShiftKind cohort = ShiftKind::InDist;
  Volume mr;
  std::vector<Volume> members;
  std::optional<Volume> reference_ct;
};

/// Throws MalformedCase, InputNotFound and the volume I/O errors.
LoadedCase load_case(const std::filesystem::path& case_dir);

/// case_* subdirectories in lexicographic order.
std::vector<std::filesystem::path> list_case_directories(const std::filesystem::path& root);

std::vector<CaseMetrics> evaluate_cohort_directory(const std::filesystem::path& root, const EvaluationOptions& options,
                                                   int jobs);

ShiftKind parse_shift_kind(std::string_view name);

}  // namespace sentinel
