#include "sentinel/qc_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "sentinel/error.hpp"

namespace sentinel {

namespace {

void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorKind::LengthMismatch, fmt::format("length mismatch: {} vs {}", xs.size(), ys.size()));
  }
  if (xs.size() < 2) throw Error(ErrorKind::TooFewSamples, "need at least 2 paired samples");
}

struct Moments {
  double mean_x, mean_y, sxx, syy, sxy;
};

Moments centered_moments(std::span<const double> xs, std::span<const double> ys) {
  Moments m{sample_mean(xs), sample_mean(ys), 0.0, 0.0, 0.0};
  CompensatedSum sxx, syy, sxy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - m.mean_x;
    const double dy = ys[i] - m.mean_y;
    sxx.add(dx * dx);
    syy.add(dy * dy);
    sxy.add(dx * dy);
  }
  m.sxx = sxx.value();
  m.syy = syy.value();
  m.sxy = sxy.value();
  return m;
}

double sample_variance(std::span<const double> xs) {
  const double mean = sample_mean(xs);
  CompensatedSum s;
  for (double x : xs) s.add((x - mean) * (x - mean));
  return s.value() / static_cast<double>(xs.size() - 1);
}

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  return h;
}

// I_x(a, b) with y = 1 - x supplied separately so callers can pass an
// accurately computed complement.
double incomplete_beta(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

}  // namespace

std::string ThresholdMethod::to_string() const {
  return fmt::format("{}:{}", rule == ThresholdRule::MaxPlusMargin ? "max_plus_margin" : "mean_plus_k_sigma",
                     parameter);
}

ThresholdMethod ThresholdMethod::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("threshold method '{}' lacks ':<value>'", text));
  }
  const auto name = text.substr(0, colon);
  const auto number = std::string(text.substr(colon + 1));
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(number, &used);
    if (used != number.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("threshold method '{}' has a bad parameter", text));
  }
  if (!std::isfinite(value)) throw Error(ErrorKind::InvalidArgument, "threshold method parameter must be finite");
  if (name == "max_plus_margin" || name == "max-margin") return max_plus_margin(value);
  if (name == "mean_plus_k_sigma" || name == "mean-ksigma") return mean_plus_k_sigma(value);
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown threshold method '{}'", name));
}

std::string_view verdict_name(Verdict verdict) {
  return verdict == Verdict::InDistribution ? "InDistribution" : "OutOfDistribution";
}

QcReport make_report(std::string case_id, double mean_uncertainty, const QcThreshold& threshold,
                     std::optional<double> mae, std::string timestamp) {
  return QcReport{std::move(case_id), mean_uncertainty, threshold, classify(mean_uncertainty, threshold), mae,
                  std::move(timestamp)};
}

nlohmann::ordered_json to_json(const QcReport& report) {
  nlohmann::ordered_json j;
  j["case_id"] = report.case_id;
  j["mean_uncertainty_hu"] = report.mean_uncertainty;
  j["threshold_hu"] = report.threshold.value;
  j["threshold_method"] = report.threshold.method.to_string();
  j["verdict"] = std::string(verdict_name(report.verdict));
  j["mae_hu"] = report.mae ? nlohmann::ordered_json(*report.mae) : nlohmann::ordered_json(nullptr);
  j["timestamp"] = report.timestamp;
  return j;
}

nlohmann::ordered_json to_json(const QcThreshold& threshold) {
  nlohmann::ordered_json j;
  j["value_hu"] = threshold.value;
  j["method"] = threshold.method.to_string();
  j["n"] = threshold.calibration_cohort_size;
  return j;
}

QcThreshold threshold_from_json(const nlohmann::json& j) {
  try {
    QcThreshold t;
    t.value = j.at("value_hu").get<double>();
    t.method = ThresholdMethod::parse(j.at("method").get<std::string>());
    t.calibration_cohort_size = j.at("n").get<int>();
    if (!(t.value > 0.0) || !std::isfinite(t.value)) {
      throw Error(ErrorKind::InvalidThreshold, fmt::format("threshold must be finite and > 0, got {}", t.value));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, fmt::format("malformed threshold JSON: {}", e.what()));
  }
}

double sample_mean(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorKind::TooFewSamples, "mean of an empty sample");
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) throw Error(ErrorKind::TooFewSamples, "sample std needs at least 2 values");
  return std::sqrt(sample_variance(xs));
}

CohortStats cohort_stats(std::span<const double> mean_uncertainties) {
  return CohortStats{static_cast<int>(mean_uncertainties.size()), sample_mean(mean_uncertainties),
                     sample_std(mean_uncertainties)};
}

QcThreshold calibrate_threshold(std::span<const double> in_distribution_means, ThresholdMethod method) {
  if (in_distribution_means.size() < 2) {
    throw Error(ErrorKind::TooFewCalibrationCases,
                fmt::format("calibration needs at least 2 in-distribution cases, got {}", in_distribution_means.size()));
  }
  for (double x : in_distribution_means) {
    if (!std::isfinite(x) || x < 0.0) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("calibration value {} is not finite and >= 0", x));
    }
  }
  double value = 0.0;
  if (method.rule == ThresholdRule::MaxPlusMargin) {
    value = *std::max_element(in_distribution_means.begin(), in_distribution_means.end()) + method.parameter;
  } else {
    value = sample_mean(in_distribution_means) + method.parameter * sample_std(in_distribution_means);
  }
  if (!(value > 0.0)) {
    throw Error(ErrorKind::InvalidThreshold, fmt::format("calibrated threshold {} is not > 0", value));
  }
  return QcThreshold{value, method, static_cast<int>(in_distribution_means.size())};
}

Verdict classify(double mean_uncertainty, const QcThreshold& threshold) {
  return mean_uncertainty > threshold.value ? Verdict::OutOfDistribution : Verdict::InDistribution;
}

double mae_within_mask(const Volume& sct, const Volume& ref, const Mask& body) {
  require_compatible(sct.grid(), ref.grid(), "MAE reference");
  require_compatible(sct.grid(), body.grid(), "MAE mask");
  const auto a = sct.values(), b = ref.values();
  const auto bits = body.bits();
  CompensatedSum s;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bits[i]) continue;
    s.add(std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::EmptyMask, "MAE mask selects no voxels");
  return s.value() / static_cast<double>(n);
}

double mae_full_volume(const Volume& sct, const Volume& ref) {
  return mae_within_mask(sct, ref, Mask::filled(sct.grid(), true));
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const Moments m = centered_moments(xs, ys);
  if (m.sxx == 0.0 || m.syy == 0.0) throw Error(ErrorKind::ZeroVariance, "pearson: a sample is constant");
  const double r = m.sxy / std::sqrt(m.sxx * m.syy);
  return std::clamp(r, -1.0, 1.0);
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorKind::TooFewSamples, "Welch's t-test needs at least 2 values per sample");
  }
  for (auto sample : {a, b}) {
    for (double x : sample) {
      if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteInput, "Welch's t-test input is not finite");
    }
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = sample_mean(a), mb = sample_mean(b);
  const double qa = sample_variance(a) / na;
  const double qb = sample_variance(b) / nb;
  const double se2 = qa + qb;
  WelchResult result;
  if (se2 == 0.0) {
    result.df = na + nb - 2.0;
    if (ma == mb) {
      result.t = 0.0;
      result.p_two_sided = 1.0;
    } else {
      result.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      result.p_two_sided = 0.0;
    }
    return result;
  }
  result.t = (ma - mb) / std::sqrt(se2);
  result.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  result.p_two_sided = student_t_two_sided_p(result.t, result.df);
  return result;
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys);
  const Moments m = centered_moments(xs, ys);
  if (m.sxx == 0.0) throw Error(ErrorKind::ZeroVariance, "linear fit: x is constant");
  LinearFit fit;
  fit.slope = m.sxy / m.sxx;
  fit.intercept = m.mean_y - fit.slope * m.mean_x;
  return fit;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::InvalidArgument, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::InvalidArgument, "incomplete beta needs x in [0, 1]");
  return incomplete_beta(a, b, x, 1.0 - x);
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorKind::InvalidArgument, "degrees of freedom must be > 0");
  if (std::isnan(t)) throw Error(ErrorKind::NonFiniteInput, "t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x, y), 0.0, 1.0);
}

}  // namespace sentinel
