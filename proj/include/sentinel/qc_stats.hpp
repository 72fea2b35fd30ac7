#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "sentinel/volume.hpp"

namespace sentinel {

enum class ThresholdRule { MaxPlusMargin, MeanPlusKSigma };

struct ThresholdMethod {
  ThresholdRule rule = ThresholdRule::MeanPlusKSigma;
  double parameter = 3.0;  // margin in HU, or k

  static ThresholdMethod max_plus_margin(double margin_hu) { return {ThresholdRule::MaxPlusMargin, margin_hu}; }
  static ThresholdMethod mean_plus_k_sigma(double k) { return {ThresholdRule::MeanPlusKSigma, k}; }

  /// "max_plus_margin:<HU>" or "mean_plus_k_sigma:<k>".
  std::string to_string() const;
  /// Inverse of to_string(). Throws Error(InvalidArgument).
  static ThresholdMethod parse(std::string_view text);
};

struct QcThreshold {
  double value = 0.0;  // HU, > 0
  ThresholdMethod method;
  int calibration_cohort_size = 0;
};

enum class Verdict { InDistribution, OutOfDistribution };

std::string_view verdict_name(Verdict verdict);

struct QcReport {
  std::string case_id;
  double mean_uncertainty = 0.0;
  QcThreshold threshold;
  Verdict verdict = Verdict::InDistribution;
  std::optional<double> mae;
  std::string timestamp;
};

/// Builds a report whose verdict is classify(mean_uncertainty, threshold).
QcReport make_report(std::string case_id, double mean_uncertainty, const QcThreshold& threshold,
                     std::optional<double> mae, std::string timestamp);

/// Keys: case_id, mean_uncertainty_hu, threshold_hu, threshold_method,
/// verdict, mae_hu (null when absent), timestamp.
nlohmann::ordered_json to_json(const QcReport& report);

/// Threshold file layout: {value_hu, method, n}.
nlohmann::ordered_json to_json(const QcThreshold& threshold);
QcThreshold threshold_from_json(const nlohmann::json& j);

struct CohortStats {
  int n = 0;
  double mean_u = 0.0;
  double std_u = 0.0;  // sample standard deviation (n - 1)
};

double sample_mean(std::span<const double> xs);
/// n - 1 denominator. Throws TooFewSamples for n < 2.
double sample_std(std::span<const double> xs);
CohortStats cohort_stats(std::span<const double> mean_uncertainties);

/// MaxPlusMargin: max + margin. MeanPlusKSigma: mean + k * sample std.
/// Throws TooFewCalibrationCases (n < 2), InvalidArgument for negative or
/// non-finite inputs, InvalidThreshold when the result is not > 0.
QcThreshold calibrate_threshold(std::span<const double> in_distribution_means, ThresholdMethod method);

/// Strict exceedance: equal to the threshold is still in distribution.
Verdict classify(double mean_uncertainty, const QcThreshold& threshold);

/// Mean of |sct - ref| over the masked voxels.
double mae_within_mask(const Volume& sct, const Volume& ref, const Mask& body);
double mae_full_volume(const Volume& sct, const Volume& ref);

/// Sample Pearson correlation. Throws LengthMismatch, TooFewSamples, ZeroVariance.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

/// Welch's unequal-variance t-test. When both samples have zero variance the
/// result is t = 0, p = 1 for equal means and t = +-inf, p = 0 otherwise, with
/// df = na + nb - 2.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

/// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace sentinel
