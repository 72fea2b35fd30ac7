#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sentinel/cohort.hpp"
#include "sentinel/qc_stats.hpp"

namespace sentinel {

struct PairwiseTest {
  ShiftKind a = ShiftKind::InDist;
  ShiftKind b = ShiftKind::InDist;
  WelchResult result;
};

/// Correlation of mean uncertainty against MAE. `cohort` is empty for the
/// pooled entry over every case that has an MAE.
struct CorrelationSummary {
  std::optional<ShiftKind> cohort;
  int n = 0;
  double r = 0.0;
  LinearFit fit;
};

struct CohortSummary {
  ShiftKind cohort = ShiftKind::InDist;
  CohortStats stats;
};

struct CohortReport {
  QcThreshold threshold;
  std::vector<QcReport> cases;
  std::vector<ShiftKind> case_cohorts;  // parallel to `cases`
  std::vector<CohortSummary> cohorts;   // cohorts with >= 2 cases, InDist first
  std::vector<PairwiseTest> tests;      // every cohort pair
  std::vector<CorrelationSummary> correlations;
};

/// Threshold calibrated on the InDist cases of `metrics`.
QcThreshold calibrate_from_metrics(std::span<const CaseMetrics> metrics, ThresholdMethod method);

/// Verdicts, per-cohort statistics, Welch tests for each cohort pair, and
/// Pearson r / OLS fit per cohort with MAE plus one pooled entry.
/// Throws TooFewSamples when a present cohort has fewer than 2 cases.
CohortReport build_cohort_report(std::span<const CaseMetrics> metrics, const QcThreshold& threshold,
                                 const std::string& timestamp);

/// Columns: cohort,case_id,mean_uncertainty_hu,mae_hu,verdict. HU values
/// use 2 decimals; mae_hu is empty when there is no reference CT.
std::string report_csv(const CohortReport& report);

nlohmann::ordered_json report_json(const CohortReport& report);

/// Per-case mean uncertainty grouped by cohort. Each point carries
/// data-cohort, data-case-id and data-value attributes.
std::string strip_plot_svg(const CohortReport& report);

/// Mean uncertainty vs MAE with one OLS line and r annotation per cohort,
/// plus an r annotation for the pooled cases (data-cohort="pooled").
/// Points carry data-cohort, data-case-id, data-x and data-y; annotations
/// carry data-r with the unrounded coefficient.
std::string scatter_plot_svg(const CohortReport& report);

/// ISO-8601 UTC timestamp. SOURCE_DATE_EPOCH, when set, replaces the clock
/// so reports can be reproduced byte-for-byte.
std::string current_timestamp();
std::string format_timestamp(std::int64_t unix_seconds);

}  // namespace sentinel
