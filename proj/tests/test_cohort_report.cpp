#include <filesystem>
#include <regex>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

#include "doctest.h"
#include "helpers.hpp"
#include "sentinel/cohort.hpp"
#include "sentinel/report.hpp"
#include "sentinel/volume_io.hpp"

using namespace sentinel;
namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

CohortConfig small_config() {
  CohortConfig c;
  c.spec = resize_spec(PhantomSpec{}, 48);
  c.n_in_dist = 3;
  c.n_contrast = 3;
  c.n_scanner = 3;
  return c;
}

pt::ptree parse_svg(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

// Every element under <svg> with the given tag.
std::vector<pt::ptree> children(const pt::ptree& tree, const std::string& tag) {
  std::vector<pt::ptree> out;
  for (const auto& [name, node] : tree.get_child("svg")) {
    if (name == tag) out.push_back(node);
  }
  return out;
}

std::string attr(const pt::ptree& node, const std::string& name) { return node.get<std::string>("<xmlattr>." + name); }

std::vector<CaseMetrics> synthetic_metrics() {
  std::vector<CaseMetrics> m;
  const double u[] = {100, 104, 98, 102, 110, 108, 115, 112, 130, 128, 135};
  const double e[] = {30, 32, 29, 31, 35, 33, 36, 35, -1, -1, -1};
  const ShiftKind k[] = {ShiftKind::InDist,        ShiftKind::InDist,        ShiftKind::InDist,
                         ShiftKind::InDist,        ShiftKind::ContrastAgent, ShiftKind::ContrastAgent,
                         ShiftKind::ContrastAgent, ShiftKind::ContrastAgent, ShiftKind::ScannerShift,
                         ShiftKind::ScannerShift,  ShiftKind::ScannerShift};
  for (int i = 0; i < 11; ++i) {
    CaseMetrics c{fmt::format("{:03d}", i), k[i], u[i], std::nullopt};
    if (e[i] > 0) c.mae = e[i];
    m.push_back(c);
  }
  return m;
}

}  // namespace

TEST_CASE("cohort plan layout and seeds") {
  const CohortConfig cfg = small_config();
  const auto cases = plan_cohorts(cfg);
  REQUIRE(cases.size() == 9);
  CHECK(cases[0].case_id == "000");
  CHECK(cases[8].case_id == "008");
  CHECK(cases[0].cohort == ShiftKind::InDist);
  CHECK(cases[3].cohort == ShiftKind::ContrastAgent);
  CHECK(cases[6].cohort == ShiftKind::ScannerShift);
  CHECK(cases[5].reference_ct_available);
  CHECK_FALSE(cases[6].reference_ct_available);
  CHECK(cases[0].spec.seed != cases[1].spec.seed);
  CHECK(cases[0].stubs[0].seed != cases[0].stubs[1].seed);
  CHECK(cases[0].stubs[0].plane == Plane::Axial);
  CHECK(cases[0].stubs[2].plane == Plane::Sagittal);
  // ScannerShift acquisitions are noisier
  CHECK(cases[6].spec.mr_noise_std > cfg.spec.mr_noise_std * (1 - cfg.noise_jitter));

  const auto again = plan_cohorts(cfg);
  for (std::size_t i = 0; i < cases.size(); ++i) CHECK(case_meta(cases[i]).dump() == case_meta(again[i]).dump());

  CohortConfig reseeded = cfg;
  reseeded.seed = 7;
  CHECK(plan_cohorts(reseeded)[0].spec.seed != cases[0].spec.seed);
}

TEST_CASE("cohort config validation and JSON") {
  CohortConfig c = small_config();
  c.n_scanner = 1;
  CHECK_ERROR_KIND(c.validate(), ErrorKind::InvalidSpec);
  c = small_config();
  c.noise_jitter = 1.0;
  CHECK_ERROR_KIND(c.validate(), ErrorKind::InvalidSpec);
  c = small_config();
  c.contrast = ShiftMode::scanner_shift(0.5, 1.5);
  CHECK_ERROR_KIND(c.validate(), ErrorKind::InvalidSpec);

  c = small_config();
  c.seed = 99;
  c.scanner.gamma = 0.4;
  const CohortConfig back = cohort_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back).dump() == to_json(c).dump());
}

TEST_CASE("in-memory evaluation is independent of the job count") {
  const CohortConfig cfg = small_config();
  const auto serial = evaluate_simulation(cfg, {}, 1);
  const auto parallel = evaluate_simulation(cfg, {}, 4);
  REQUIRE(serial.size() == 9);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].case_id == parallel[i].case_id);
    CHECK(serial[i].mean_uncertainty == parallel[i].mean_uncertainty);
    CHECK(serial[i].mae == parallel[i].mae);
    CHECK(serial[i].mean_uncertainty > 0.0);
    CHECK(serial[i].mae.has_value() == (serial[i].cohort != ShiftKind::ScannerShift));
  }
}

TEST_CASE("cohort directory round trip matches the in-memory pipeline") {
  const CohortConfig cfg = small_config();
  const fs::path root = fs::temp_directory_path() / "sentinel_cohort_test";
  fs::remove_all(root);
  simulate_to_directory(cfg, root, 2);
  CHECK(fs::exists(root / "cohort.json"));
  const auto dirs = list_case_directories(root);
  REQUIRE(dirs.size() == 9);
  CHECK(dirs[0].filename() == "case_000");
  for (const char* f : kMemberFiles) CHECK(fs::exists(dirs[0] / f));

  const auto from_disk = evaluate_cohort_directory(root, {}, 3);
  const auto in_memory = evaluate_simulation(cfg, {}, 1);
  for (std::size_t i = 0; i < in_memory.size(); ++i) {
    CHECK(from_disk[i].case_id == in_memory[i].case_id);
    CHECK(from_disk[i].cohort == in_memory[i].cohort);
    CHECK(from_disk[i].mean_uncertainty == in_memory[i].mean_uncertainty);
    CHECK(from_disk[i].mae == in_memory[i].mae);
  }

  const LoadedCase scanner = load_case(dirs[8]);
  CHECK_FALSE(scanner.reference_ct.has_value());
  CHECK(scanner.members.size() == 3);

  write_text_file(dirs[1] / "meta.json", "{\"case_id\": 5}");
  CHECK_ERROR_KIND(load_case(dirs[1]), ErrorKind::MalformedCase);
  write_text_file(dirs[1] / "meta.json", "not json");
  CHECK_ERROR_KIND(load_case(dirs[1]), ErrorKind::MalformedCase);
  fs::remove(dirs[2] / "sct_cor.nii");
  CHECK_ERROR_KIND(load_case(dirs[2]), ErrorKind::InputNotFound);
  CHECK_ERROR_KIND(load_case(root / "case_999"), ErrorKind::InputNotFound);
  fs::remove_all(root);
}

TEST_CASE("evaluate_case with identical members and the reference as sCT") {
  const Phantom p = generate_phantom(resize_spec(PhantomSpec{}, 40));
  const std::vector<Volume> members{p.ct, p.ct, p.ct};
  const CaseEvaluation ev = evaluate_case("x", ShiftKind::InDist, members, p.mr, p.ct, {});
  CHECK(ev.metrics.mean_uncertainty == 0.0);
  REQUIRE(ev.metrics.mae.has_value());
  CHECK(*ev.metrics.mae == 0.0);
}

TEST_CASE("cohort report structure, CSV and JSON") {
  const auto metrics = synthetic_metrics();
  const QcThreshold thr = calibrate_from_metrics(metrics, ThresholdMethod::max_plus_margin(0));
  CHECK(thr.value == 104.0);
  CHECK(thr.calibration_cohort_size == 4);
  const CohortReport r = build_cohort_report(metrics, thr, "2024-01-01T00:00:00Z");
  CHECK(r.cases.size() == 11);
  CHECK(r.cohorts.size() == 3);
  CHECK(r.tests.size() == 3);
  for (const auto& t : r.tests) {
    CHECK(t.result.p_two_sided >= 0.0);
    CHECK(t.result.p_two_sided <= 1.0);
  }
  REQUIRE(r.correlations.size() == 3);  // InDist, ContrastAgent, pooled
  CHECK_FALSE(r.correlations.back().cohort.has_value());
  CHECK(r.correlations.back().n == 8);

  const std::string csv = report_csv(r);
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 12);
  CHECK(lines[0] == "cohort,case_id,mean_uncertainty_hu,mae_hu,verdict");
  CHECK(lines[1] == "InDist,000,100.00,30.00,InDistribution");
  CHECK(lines[9] == "ScannerShift,008,130.00,,OutOfDistribution");

  const auto j = report_json(r);
  CHECK(j["cases"].size() == 11);
  CHECK(j["threshold"]["method"] == "max_plus_margin:0");
  CHECK(j["correlations"].back()["cohort"] == "pooled");
  CHECK(report_json(r).dump() == j.dump());

  CHECK_ERROR_KIND(build_cohort_report(std::vector<CaseMetrics>(metrics.begin(), metrics.begin() + 9), thr, ""),
                   ErrorKind::TooFewSamples);
}

TEST_CASE("plots are well-formed and carry their data") {
  const auto metrics = synthetic_metrics();
  const QcThreshold thr = calibrate_from_metrics(metrics, ThresholdMethod::mean_plus_k_sigma(3));
  const CohortReport r = build_cohort_report(metrics, thr, "");

  const auto strip = parse_svg(strip_plot_svg(r));
  CHECK(strip.get<std::string>("svg.<xmlattr>.data-kind") == "strip");
  CHECK(strip.get<int>("svg.<xmlattr>.data-points") == 11);
  const auto dots = children(strip, "circle");
  REQUIRE(dots.size() == 11);
  for (std::size_t i = 0; i < dots.size(); ++i) {
    CHECK(attr(dots[i], "data-case-id") == metrics[i].case_id);
    CHECK(std::stod(attr(dots[i], "data-value")) == metrics[i].mean_uncertainty);
    CHECK(attr(dots[i], "data-cohort") == std::string(shift_kind_name(metrics[i].cohort)));
  }
  bool threshold_line = false;
  for (const auto& line : children(strip, "line")) {
    if (line.get_optional<std::string>("<xmlattr>.data-threshold")) {
      threshold_line = true;
      CHECK(std::stod(attr(line, "data-threshold")) == thr.value);
    }
  }
  CHECK(threshold_line);

  const auto scatter = parse_svg(scatter_plot_svg(r));
  CHECK(scatter.get<std::string>("svg.<xmlattr>.data-kind") == "scatter");
  CHECK(scatter.get<int>("svg.<xmlattr>.data-points") == 8);
  CHECK(children(scatter, "circle").size() == 8);
  std::size_t annotations = 0;
  for (const auto& t : children(scatter, "text")) {
    if (t.get<std::string>("<xmlattr>.class", "") != "r-annotation") continue;
    ++annotations;
    const std::string cohort = attr(t, "data-cohort");
    const double r_attr = std::stod(attr(t, "data-r"));
    const auto& c = *std::find_if(r.correlations.begin(), r.correlations.end(), [&](const CorrelationSummary& s) {
      return (s.cohort ? std::string(shift_kind_name(*s.cohort)) : std::string("pooled")) == cohort;
    });
    CHECK(r_attr == c.r);
    CHECK(t.data().find(fmt::format("r = {:.2f}", c.r)) != std::string::npos);
  }
  CHECK(annotations == r.correlations.size());
}

TEST_CASE("identical cases still produce valid plots") {
  std::vector<CaseMetrics> same;
  for (int i = 0; i < 4; ++i) same.push_back({fmt::format("{:03d}", i), ShiftKind::InDist, 50.0, 20.0});
  const QcThreshold thr = calibrate_from_metrics(same, ThresholdMethod::max_plus_margin(1));
  const CohortReport r = build_cohort_report(same, thr, "");
  CHECK(r.tests.empty());
  CHECK(r.correlations.empty());
  const auto strip = parse_svg(strip_plot_svg(r));
  const auto dots = children(strip, "circle");
  REQUIRE(dots.size() == 4);
  for (const auto& d : dots) CHECK(attr(d, "cy") == attr(dots[0], "cy"));
  CHECK_NOTHROW(parse_svg(scatter_plot_svg(r)));
}

TEST_CASE("timestamps") {
  CHECK(format_timestamp(0) == "1970-01-01T00:00:00Z");
  CHECK(format_timestamp(1700000000) == "2023-11-14T22:13:20Z");
  setenv("SOURCE_DATE_EPOCH", "86400", 1);
  CHECK(current_timestamp() == "1970-01-02T00:00:00Z");
  unsetenv("SOURCE_DATE_EPOCH");
  CHECK(std::regex_match(current_timestamp(), std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ)")));
}
