#include "sentinel/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>

#include <fmt/format.h>

#include "sentinel/error.hpp"
#include "sentinel/random.hpp"

namespace sentinel {

namespace {

constexpr std::array<ShiftKind, 3> kCohortOrder{ShiftKind::InDist, ShiftKind::ContrastAgent, ShiftKind::ScannerShift};

const char* cohort_colour(ShiftKind k) {
  switch (k) {
    case ShiftKind::InDist: return "#1f77b4";
    case ShiftKind::ContrastAgent: return "#ff7f0e";
    case ShiftKind::ScannerShift: return "#2ca02c";
  }
  return "#000000";
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> cohort_values(std::span<const CaseMetrics> metrics, ShiftKind cohort) {
  std::vector<double> out;
  for (const auto& m : metrics) {
    if (m.cohort == cohort) out.push_back(m.mean_uncertainty);
  }
  return out;
}

std::optional<CorrelationSummary> correlate(std::span<const CaseMetrics> metrics, std::optional<ShiftKind> cohort) {
  std::vector<double> xs, ys;
  for (const auto& m : metrics) {
    if (!m.mae) continue;
    if (cohort && m.cohort != *cohort) continue;
    xs.push_back(m.mean_uncertainty);
    ys.push_back(*m.mae);
  }
  if (xs.size() < 2) return std::nullopt;
  try {
    return CorrelationSummary{cohort, static_cast<int>(xs.size()), pearson(xs, ys), linear_fit(xs, ys)};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ZeroVariance) return std::nullopt;
    throw;
  }
}

// Axis range padded by 10%; degenerate ranges widen to +-1.
std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) return {lo - 1.0, hi + 1.0};
  const double pad = 0.1 * (hi - lo);
  return {lo - pad, hi + pad};
}

struct Frame {
  double width = 640, height = 420;
  double left = 70, right = 20, top = 40, bottom = 50;
  double x0, x1, y0, y1;  // data ranges

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

void axes(std::string& svg, const Frame& f, const std::string& x_label, const std::string& y_label, bool x_ticks) {
  svg += fmt::format(R"(  <line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#000"/>)"
                     "\n",
                     f.left, f.height - f.bottom, f.width - f.right, f.height - f.bottom);
  svg += fmt::format(R"(  <line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#000"/>)"
                     "\n",
                     f.left, f.top, f.left, f.height - f.bottom);
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    svg += fmt::format(R"(  <text x="{:.2f}" y="{:.2f}" font-size="10" text-anchor="end">{:.1f}</text>)"
                       "\n",
                       f.left - 5, f.py(y) + 3, y);
    if (x_ticks) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
      svg += fmt::format(R"(  <text x="{:.2f}" y="{:.2f}" font-size="10" text-anchor="middle">{:.1f}</text>)"
                         "\n",
                         f.px(x), f.height - f.bottom + 14, x);
    }
  }
  svg += fmt::format(R"(  <text x="{:.2f}" y="{:.2f}" font-size="12" text-anchor="middle">{}</text>)"
                     "\n",
                     (f.left + f.width - f.right) / 2, f.height - 10, xml_escape(x_label));
  svg += fmt::format(
      R"svg(  <text x="14" y="{:.2f}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2f})">{}</text>)svg"
      "\n",
      (f.top + f.height - f.bottom) / 2, (f.top + f.height - f.bottom) / 2, xml_escape(y_label));
}

}  // namespace

QcThreshold calibrate_from_metrics(std::span<const CaseMetrics> metrics, ThresholdMethod method) {
  const auto values = cohort_values(metrics, ShiftKind::InDist);
  return calibrate_threshold(values, method);
}

CohortReport build_cohort_report(std::span<const CaseMetrics> metrics, const QcThreshold& threshold,
                                 const std::string& timestamp) {
  CohortReport report;
  report.threshold = threshold;
  for (const auto& m : metrics) {
    report.cases.push_back(make_report(m.case_id, m.mean_uncertainty, threshold, m.mae, timestamp));
    report.case_cohorts.push_back(m.cohort);
  }
  std::vector<ShiftKind> present;
  for (ShiftKind k : kCohortOrder) {
    const auto values = cohort_values(metrics, k);
    if (values.empty()) continue;
    if (values.size() < 2) {
      throw Error(ErrorKind::TooFewSamples,
                  fmt::format("cohort {} has {} case; at least 2 are needed", shift_kind_name(k), values.size()));
    }
    report.cohorts.push_back(CohortSummary{k, cohort_stats(values)});
    present.push_back(k);
  }
  for (std::size_t i = 0; i < present.size(); ++i) {
    for (std::size_t j = i + 1; j < present.size(); ++j) {
      const auto a = cohort_values(metrics, present[i]);
      const auto b = cohort_values(metrics, present[j]);
      report.tests.push_back(PairwiseTest{present[i], present[j], welch_t_test(a, b)});
    }
  }
  for (ShiftKind k : present) {
    if (auto c = correlate(metrics, k)) report.correlations.push_back(*c);
  }
  if (auto pooled = correlate(metrics, std::nullopt)) report.correlations.push_back(*pooled);
  return report;
}

std::string report_csv(const CohortReport& report) {
  std::string out = "cohort,case_id,mean_uncertainty_hu,mae_hu,verdict\n";
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    const auto& c = report.cases[i];
    out += fmt::format("{},{},{:.2f},{},{}\n", shift_kind_name(report.case_cohorts[i]), c.case_id, c.mean_uncertainty,
                       c.mae ? fmt::format("{:.2f}", *c.mae) : std::string(), verdict_name(c.verdict));
  }
  return out;
}

nlohmann::ordered_json report_json(const CohortReport& report) {
  nlohmann::ordered_json j;
  j["threshold"] = to_json(report.threshold);
  auto cases = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    auto c = to_json(report.cases[i]);
    c["cohort"] = std::string(shift_kind_name(report.case_cohorts[i]));
    cases.push_back(std::move(c));
  }
  j["cases"] = std::move(cases);

  auto cohorts = nlohmann::ordered_json::array();
  for (const auto& c : report.cohorts) {
    nlohmann::ordered_json e;
    e["cohort"] = std::string(shift_kind_name(c.cohort));
    e["n"] = c.stats.n;
    e["mean_uncertainty_hu"] = c.stats.mean_u;
    e["std_uncertainty_hu"] = c.stats.std_u;
    cohorts.push_back(std::move(e));
  }
  j["cohorts"] = std::move(cohorts);

  auto tests = nlohmann::ordered_json::array();
  for (const auto& t : report.tests) {
    nlohmann::ordered_json e;
    e["a"] = std::string(shift_kind_name(t.a));
    e["b"] = std::string(shift_kind_name(t.b));
    // nlohmann serializes non-finite numbers as null; keep them readable.
    if (std::isfinite(t.result.t)) {
      e["t"] = t.result.t;
    } else {
      e["t"] = t.result.t > 0 ? "inf" : "-inf";
    }
    e["df"] = t.result.df;
    e["p_two_sided"] = t.result.p_two_sided;
    tests.push_back(std::move(e));
  }
  j["welch_tests"] = std::move(tests);

  auto correlations = nlohmann::ordered_json::array();
  for (const auto& c : report.correlations) {
    nlohmann::ordered_json e;
    e["cohort"] = c.cohort ? std::string(shift_kind_name(*c.cohort)) : std::string("pooled");
    e["n"] = c.n;
    e["pearson_r"] = c.r;
    e["slope"] = c.fit.slope;
    e["intercept"] = c.fit.intercept;
    correlations.push_back(std::move(e));
  }
  j["correlations"] = std::move(correlations);
  return j;
}

std::string strip_plot_svg(const CohortReport& report) {
  std::vector<ShiftKind> columns;
  for (const auto& c : report.cohorts) columns.push_back(c.cohort);
  if (columns.empty()) columns.push_back(ShiftKind::InDist);

  double lo = report.threshold.value, hi = report.threshold.value;
  for (const auto& c : report.cases) {
    lo = std::min(lo, c.mean_uncertainty);
    hi = std::max(hi, c.mean_uncertainty);
  }
  Frame f;
  std::tie(f.y0, f.y1) = padded_range(lo, hi);
  f.x0 = 0.0;
  f.x1 = static_cast<double>(columns.size());

  std::string svg;
  svg += R"(<?xml version="1.0" encoding="UTF-8"?>)"
         "\n";
  svg += fmt::format(
      R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" data-kind="strip" data-points="{}">)"
      "\n",
      f.width, f.height, f.width, f.height, report.cases.size());
  svg += R"(  <text x="320" y="20" font-size="14" text-anchor="middle">Mean ensemble uncertainty per case</text>)"
         "\n";
  axes(svg, f, "cohort", "mean uncertainty (HU)", false);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    svg += fmt::format(R"(  <text x="{:.2f}" y="{:.2f}" font-size="11" text-anchor="middle">{}</text>)"
                       "\n",
                       f.px(c + 0.5), f.height - f.bottom + 14, shift_kind_name(columns[c]));
  }
  svg += fmt::format(
      R"(  <line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#d62728" stroke-dasharray="6 4" data-threshold="{}"/>)"
      "\n",
      f.left, f.py(report.threshold.value), f.width - f.right, f.py(report.threshold.value), report.threshold.value);
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    const auto& c = report.cases[i];
    const ShiftKind k = report.case_cohorts[i];
    const auto column = static_cast<double>(std::find(columns.begin(), columns.end(), k) - columns.begin());
    // Deterministic horizontal jitter within the cohort column.
    const double jitter = (static_cast<double>(mix64(i) >> 11) * 0x1.0p-53 - 0.5) * 0.5;
    svg += fmt::format(
        R"(  <circle cx="{:.2f}" cy="{:.2f}" r="3" fill="{}" data-cohort="{}" data-case-id="{}" data-value="{}"/>)"
        "\n",
        f.px(column + 0.5 + jitter), f.py(c.mean_uncertainty), cohort_colour(k), shift_kind_name(k),
        xml_escape(c.case_id), c.mean_uncertainty);
  }
  svg += "</svg>\n";
  return svg;
}

std::string scatter_plot_svg(const CohortReport& report) {
  std::vector<std::size_t> points;
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    if (report.cases[i].mae) points.push_back(i);
  }
  Frame f;
  if (points.empty()) {
    f.x0 = 0, f.x1 = 1, f.y0 = 0, f.y1 = 1;
  } else {
    double xl = report.cases[points[0]].mean_uncertainty, xh = xl;
    double yl = *report.cases[points[0]].mae, yh = yl;
    for (std::size_t i : points) {
      xl = std::min(xl, report.cases[i].mean_uncertainty);
      xh = std::max(xh, report.cases[i].mean_uncertainty);
      yl = std::min(yl, *report.cases[i].mae);
      yh = std::max(yh, *report.cases[i].mae);
    }
    std::tie(f.x0, f.x1) = padded_range(xl, xh);
    std::tie(f.y0, f.y1) = padded_range(yl, yh);
  }

  std::string svg;
  svg += R"(<?xml version="1.0" encoding="UTF-8"?>)"
         "\n";
  svg += fmt::format(
      R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" data-kind="scatter" data-points="{}">)"
      "\n",
      f.width, f.height, f.width, f.height, points.size());
  svg += R"(  <text x="320" y="20" font-size="14" text-anchor="middle">Mean uncertainty vs. MAE</text>)"
         "\n";
  svg += fmt::format(R"(  <clipPath id="plot-area"><rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}"/></clipPath>)"
                     "\n",
                     f.left, f.top, f.width - f.left - f.right, f.height - f.top - f.bottom);
  axes(svg, f, "mean uncertainty (HU)", "MAE (HU)", true);

  int row = 0;
  for (const auto& c : report.correlations) {
    if (!c.cohort) continue;
    double xl = 0, xh = 0;
    bool first = true;
    for (std::size_t i : points) {
      if (report.case_cohorts[i] != *c.cohort) continue;
      const double x = report.cases[i].mean_uncertainty;
      xl = first ? x : std::min(xl, x);
      xh = first ? x : std::max(xh, x);
      first = false;
    }
    const char* colour = cohort_colour(*c.cohort);
    svg += fmt::format(
        R"svg(  <line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" clip-path="url(#plot-area)" data-cohort="{}" data-slope="{}" data-intercept="{}"/>)svg"
        "\n",
        f.px(xl), f.py(c.fit.slope * xl + c.fit.intercept), f.px(xh), f.py(c.fit.slope * xh + c.fit.intercept), colour,
        shift_kind_name(*c.cohort), c.fit.slope, c.fit.intercept);
    svg += fmt::format(
        R"(  <text x="{:.2f}" y="{:.2f}" font-size="11" text-anchor="end" fill="{}" class="r-annotation" data-cohort="{}" data-r="{}">{} r = {:.2f}</text>)"
        "\n",
        f.width - f.right - 5, f.height - f.bottom - 10 - 14 * row, colour, shift_kind_name(*c.cohort), c.r,
        shift_kind_name(*c.cohort), c.r);
    ++row;
  }
  for (const auto& c : report.correlations) {
    if (c.cohort) continue;
    svg += fmt::format(
        R"(  <text x="{:.2f}" y="{:.2f}" font-size="11" text-anchor="end" fill="#333333" class="r-annotation" data-cohort="pooled" data-r="{}">pooled r = {:.2f}</text>)"
        "\n",
        f.width - f.right - 5, f.height - f.bottom - 10 - 14 * row, c.r, c.r);
  }
  for (std::size_t i : points) {
    const auto& c = report.cases[i];
    const ShiftKind k = report.case_cohorts[i];
    svg += fmt::format(
        R"(  <circle cx="{:.2f}" cy="{:.2f}" r="3" fill="{}" data-cohort="{}" data-case-id="{}" data-x="{}" data-y="{}"/>)"
        "\n",
        f.px(c.mean_uncertainty), f.py(*c.mae), cohort_colour(k), shift_kind_name(k), xml_escape(c.case_id),
        c.mean_uncertainty, *c.mae);
  }
  svg += "</svg>\n";
  return svg;
}

std::string format_timestamp(std::int64_t unix_seconds) {
  const std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm utc{};
  gmtime_r(&t, &utc);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", utc.tm_year + 1900, utc.tm_mon + 1, utc.tm_mday,
                     utc.tm_hour, utc.tm_min, utc.tm_sec);
}

std::string current_timestamp() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long seconds = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0') return format_timestamp(seconds);
  }
  const auto now = std::chrono::system_clock::now();
  return format_timestamp(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

}  // namespace sentinel
