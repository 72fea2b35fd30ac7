// sct-sentinel: ensemble sCT quality control from the command line.
//
// Exit codes: 0 success / InDistribution, 2 OutOfDistribution (qc run only),
// 1 any error. Errors go to stderr as one JSON object {"error", "message"}.
//
// Settings resolve as: built-in defaults < --config JSON < SCT_SENTINEL_SEED
// < explicit flags.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sentinel/cohort.hpp"
#include "sentinel/contour.hpp"
#include "sentinel/ensemble.hpp"
#include "sentinel/error.hpp"
#include "sentinel/qc_stats.hpp"
#include "sentinel/report.hpp"
#include "sentinel/volume_io.hpp"

namespace fs = std::filesystem;
using namespace sentinel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitOutOfDistribution = 2;

void print_error(std::string_view kind, std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) {
    nlohmann::ordered_json j;
    j["warning"] = w;
    std::cerr << j.dump() << '\n';
  }
}

bool has_suffix(const fs::path& p, std::string_view suffix) {
  const std::string s = p.string();
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// *.nii (and the rejected *.nii.gz) go through NIfTI; *.json / *.raw name a raw pair.
fs::path raw_stem(const fs::path& p) {
  if (has_suffix(p, ".json") || has_suffix(p, ".raw")) return fs::path(p).replace_extension();
  return {};
}

Volume load_volume(const fs::path& p, Semantics semantics) {
  if (const fs::path stem = raw_stem(p); !stem.empty()) {
    if (!fs::exists(fs::path(stem).concat(".json"))) {
      throw Error(ErrorKind::InputNotFound, fmt::format("input not found: {}", p.string()));
    }
    Volume v = read_raw_volume(stem);
    if (v.semantics() != semantics) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("{}: unexpected semantics", p.string()));
    }
    return v;
  }
  std::vector<std::string> warnings;
  Volume v = read_volume(p, semantics, &warnings);
  print_warnings(warnings);
  return v;
}

void store_volume(const Volume& v, const fs::path& p, const std::string& provenance) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (const fs::path stem = raw_stem(p); !stem.empty()) {
    write_raw_volume(v, stem, provenance);
  } else {
    write_volume(v, p);
  }
}

// ---------------------------------------------------------------------------
// JSON config file

struct FileConfig {
  nlohmann::json root = nlohmann::json::object();

  static FileConfig load(const std::string& path) {
    FileConfig c;
    if (path.empty()) return c;
    try {
      c.root = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidArgument, fmt::format("config {}: {}", path, e.what()));
    }
    if (!c.root.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    return c;
  }

  const nlohmann::json* section(const char* key) const {
    const auto it = root.find(key);
    return it == root.end() ? nullptr : &*it;
  }
};

ThresholdMode parse_mode(std::string_view s) {
  if (s == "otsu") return ThresholdMode::Otsu;
  if (s == "fixed" || s == "fixed_fraction") return ThresholdMode::FixedFraction;
  throw Error(ErrorKind::InvalidArgument, fmt::format("unknown threshold mode '{}'", s));
}

Connectivity parse_connectivity(int n) {
  if (n == 6) return Connectivity::Face6;
  if (n == 26) return Connectivity::FaceEdgeVertex26;
  throw Error(ErrorKind::InvalidArgument, fmt::format("connectivity must be 6 or 26, got {}", n));
}

// Contour flags shared by contour, qc run, qc calibrate and report.
struct ContourFlags {
  std::string mode;
  double fraction = 0.5;
  int radius = 2;
  int connectivity = 6;
  CLI::Option* mode_opt = nullptr;
  CLI::Option* fraction_opt = nullptr;
  CLI::Option* radius_opt = nullptr;
  CLI::Option* connectivity_opt = nullptr;

  void add(CLI::App* app) {
    mode_opt = app->add_option("--threshold-mode", mode, "otsu | fixed_fraction");
    fraction_opt = app->add_option("--fraction", fraction, "fixed_fraction: threshold = fraction * max");
    radius_opt = app->add_option("--closing-radius", radius, "closing ball radius in voxels (0..10)");
    connectivity_opt = app->add_option("--connectivity", connectivity, "6 or 26");
  }

  ContourParams resolve(const FileConfig& cfg) const {
    ContourParams p;
    if (const auto* j = cfg.section("contour")) {
      if (j->contains("mode")) p.mode = parse_mode(j->at("mode").get<std::string>());
      p.fraction = j->value("fraction", p.fraction);
      p.closing_radius = j->value("closing_radius", p.closing_radius);
      if (j->contains("connectivity")) p.connectivity = parse_connectivity(j->at("connectivity").get<int>());
    }
    if (mode_opt->count()) p.mode = parse_mode(mode);
    if (fraction_opt->count()) p.fraction = fraction;
    if (radius_opt->count()) p.closing_radius = radius;
    if (connectivity_opt->count()) p.connectivity = parse_connectivity(connectivity);
    p.validate();
    return p;
  }
};

struct JobsFlag {
  int jobs = 1;
  CLI::Option* opt = nullptr;

  void add(CLI::App* app) { opt = app->add_option("-j,--jobs", jobs, "case-level worker threads")->check(CLI::PositiveNumber); }

  int resolve(const FileConfig& cfg) const {
    if (opt->count()) return jobs;
    return cfg.root.value("jobs", 1);
  }
};

struct MethodFlag {
  std::string text;
  CLI::Option* opt = nullptr;

  void add(CLI::App* app) {
    opt = app->add_option("--method", text, "max_plus_margin:<HU> | mean_plus_k_sigma:<k> (default mean_plus_k_sigma:3)");
  }

  ThresholdMethod resolve(const FileConfig& cfg) const {
    if (opt->count()) return ThresholdMethod::parse(text);
    if (cfg.root.contains("threshold_method")) return ThresholdMethod::parse(cfg.root["threshold_method"].get<std::string>());
    return ThresholdMethod{};
  }
};

bool resolve_mae_full_volume(bool flag, const FileConfig& cfg) {
  return flag || cfg.root.value("mae_full_volume", false);
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SCT_SENTINEL_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw Error(ErrorKind::InvalidArgument, fmt::format("SCT_SENTINEL_SEED is not an integer: '{}'", s));
  return v;
}

void require_distinct(const std::vector<fs::path>& paths) {
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t j = i + 1; j < paths.size(); ++j) {
      if (fs::weakly_canonical(paths[i]) == fs::weakly_canonical(paths[j])) {
        throw Error(ErrorKind::InvalidArgument, fmt::format("input given twice: {}", paths[i].string()));
      }
    }
  }
}

std::vector<Volume> load_members(const std::vector<std::string>& paths) {
  if (paths.size() < 2) {
    throw Error(ErrorKind::TooFewMembers, fmt::format("need at least 2 sCT members, got {}", paths.size()));
  }
  std::vector<Volume> members;
  members.reserve(paths.size());
  for (const auto& p : paths) members.push_back(clamp_to_hu_range(load_volume(p, Semantics::HounsfieldUnits)));
  return members;
}

std::string timestamp_or_now(const std::string& flag) { return flag.empty() ? current_timestamp() : flag; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sct-sentinel: ensemble uncertainty QC for synthetic CT"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; explicit flags win")->check(CLI::ExistingFile);

  // simulate
  auto* sim = app.add_subcommand("simulate", "write a seeded phantom cohort to disk");
  std::string sim_out;
  std::vector<int> sim_counts;
  int sim_size = 96;
  std::uint64_t sim_seed = 42;
  JobsFlag sim_jobs;
  sim->add_option("-o,--out", sim_out, "output cohort directory")->required();
  auto* sim_counts_opt = sim->add_option("--counts", sim_counts, "InDist ContrastAgent ScannerShift case counts")
                             ->expected(3)
                             ->delimiter(',');
  auto* sim_size_opt = sim->add_option("--size", sim_size, "cubic grid size in voxels (>= 32)");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "root seed");
  sim_jobs.add(sim);

  // contour
  auto* con = app.add_subcommand("contour", "extract the body mask from an MR volume");
  std::string con_mr, con_out;
  ContourFlags con_flags;
  con->add_option("--mr", con_mr, "MR volume")->required();
  con->add_option("-o,--out", con_out, "mask output (0/1 float volume)")->required();
  con_flags.add(con);

  // fuse
  auto* fuse = app.add_subcommand("fuse", "median-fuse sCT members and map their disagreement");
  std::vector<std::string> fuse_sct;
  std::string fuse_out, fuse_unc;
  fuse->add_option("--sct", fuse_sct, "sCT member (repeat, >= 2)")->required();
  fuse->add_option("--fused", fuse_out, "fused sCT output")->required();
  fuse->add_option("--uncertainty", fuse_unc, "uncertainty map output")->required();

  // qc
  auto* qc = app.add_subcommand("qc", "quality control");
  qc->require_subcommand(1);

  auto* run = qc->add_subcommand("run", "QC one case; exit 0 in distribution, 2 out of distribution");
  std::string run_mr, run_ct, run_out, run_threshold_file, run_case_id = "case", run_timestamp;
  std::vector<std::string> run_sct;
  std::optional<double> run_threshold;
  bool run_require_mae = false, run_mae_full = false;
  ContourFlags run_flags;
  run->add_option("--mr", run_mr, "MR volume")->required();
  run->add_option("--sct", run_sct, "sCT member (repeat, >= 2)")->required();
  run->add_option("--ct", run_ct, "reference CT for MAE");
  run->add_option("-o,--out", run_out, "output directory")->required();
  auto* thr_hu = run->add_option("--threshold", run_threshold, "QC threshold in HU");
  auto* thr_file = run->add_option("--threshold-file", run_threshold_file, "threshold JSON from qc calibrate");
  thr_hu->excludes(thr_file);
  run->add_option("--case-id", run_case_id, "case identifier for the report");
  run->add_option("--timestamp", run_timestamp, "report timestamp (default: SOURCE_DATE_EPOCH or now)");
  run->add_flag("--require-mae", run_require_mae, "fail with MissingReference when --ct is absent");
  run->add_flag("--mae-full-volume", run_mae_full, "MAE over the whole grid instead of the body");
  run_flags.add(run);

  auto* cal = qc->add_subcommand("calibrate", "calibrate a threshold on the InDist cases of a cohort directory");
  std::string cal_dir, cal_out;
  MethodFlag cal_method;
  JobsFlag cal_jobs;
  ContourFlags cal_flags;
  cal->add_option("cohort", cal_dir, "cohort directory")->required();
  cal->add_option("-o,--out", cal_out, "threshold JSON output")->required();
  cal_method.add(cal);
  cal_jobs.add(cal);
  cal_flags.add(cal);

  // report
  auto* rep = app.add_subcommand("report", "evaluate a cohort directory and emit CSV, JSON and SVG plots");
  std::string rep_dir, rep_out, rep_threshold_file, rep_timestamp;
  bool rep_no_plots = false, rep_require_mae = false, rep_mae_full = false;
  MethodFlag rep_method;
  JobsFlag rep_jobs;
  ContourFlags rep_flags;
  rep->add_option("cohort", rep_dir, "cohort directory")->required();
  rep->add_option("-o,--out", rep_out, "output directory")->required();
  auto* rep_thr_file = rep->add_option("--threshold-file", rep_threshold_file, "use this threshold instead of calibrating");
  rep_method.add(rep);
  rep_thr_file->excludes(rep_method.opt);
  rep->add_option("--timestamp", rep_timestamp, "report timestamp (default: SOURCE_DATE_EPOCH or now)");
  rep->add_flag("--no-plots", rep_no_plots, "skip the SVG plots");
  rep->add_flag("--require-mae", rep_require_mae, "fail with MissingReference if any case lacks a reference CT");
  rep->add_flag("--mae-full-volume", rep_mae_full, "MAE over the whole grid instead of the body");
  rep_jobs.add(rep);
  rep_flags.add(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(kind_name(ErrorKind::InvalidArgument), e.what());
    return kExitError;
  }

  try {
    const FileConfig cfg = FileConfig::load(config_path);

    if (*sim) {
      CohortConfig cc;
      if (const auto* j = cfg.section("simulation")) cc = cohort_config_from_json(*j);
      if (cfg.root.contains("seed")) cc.seed = cfg.root["seed"].get<std::uint64_t>();
      if (const auto s = env_seed()) cc.seed = *s;
      if (sim_seed_opt->count()) cc.seed = sim_seed;
      if (sim_counts_opt->count()) {
        cc.n_in_dist = sim_counts[0];
        cc.n_contrast = sim_counts[1];
        cc.n_scanner = sim_counts[2];
      }
      if (sim_size_opt->count()) cc.spec = resize_spec(cc.spec, sim_size);
      cc.validate();
      simulate_to_directory(cc, sim_out, sim_jobs.resolve(cfg));
      std::cout << fmt::format("wrote {} cases to {}\n", cc.n_in_dist + cc.n_contrast + cc.n_scanner, sim_out);
      return kExitOk;
    }

    if (*con) {
      const ContourParams params = con_flags.resolve(cfg);
      const Mask body = extract_body_contour(load_volume(con_mr, Semantics::MrIntensityArbitrary), params);
      store_volume(mask_to_volume(body), con_out, "body contour");
      std::cout << fmt::format("body voxels: {}\n", body.count());
      return kExitOk;
    }

    if (*fuse) {
      std::vector<fs::path> paths(fuse_sct.begin(), fuse_sct.end());
      require_distinct(paths);
      const auto members = load_members(fuse_sct);
      store_volume(fuse_median(members), fuse_out, "median fusion");
      store_volume(uncertainty_map(members), fuse_unc, "ensemble uncertainty");
      return kExitOk;
    }

    if (*run) {
      const ContourParams params = run_flags.resolve(cfg);
      std::vector<fs::path> paths{run_mr};
      paths.insert(paths.end(), run_sct.begin(), run_sct.end());
      if (!run_ct.empty()) paths.emplace_back(run_ct);
      require_distinct(paths);
      if (run_require_mae && run_ct.empty()) {
        throw Error(ErrorKind::MissingReference, "--require-mae given without --ct");
      }

      QcThreshold threshold;
      if (run_threshold) {
        if (!(std::isfinite(*run_threshold) && *run_threshold > 0.0)) {
          throw Error(ErrorKind::InvalidThreshold, fmt::format("threshold must be > 0 HU, got {}", *run_threshold));
        }
        threshold.value = *run_threshold;
      } else if (!run_threshold_file.empty()) {
        threshold = threshold_from_json(nlohmann::json::parse(read_text_file(run_threshold_file)));
      } else if (const auto* j = cfg.section("threshold")) {
        threshold = threshold_from_json(*j);
      } else {
        throw Error(ErrorKind::InvalidArgument, "give --threshold or --threshold-file");
      }

      const Volume mr = load_volume(run_mr, Semantics::MrIntensityArbitrary);
      const auto members = load_members(run_sct);
      std::optional<Volume> ref;
      if (!run_ct.empty()) ref = clamp_to_hu_range(load_volume(run_ct, Semantics::HounsfieldUnits));

      EvaluationOptions options{params, resolve_mae_full_volume(run_mae_full, cfg)};
      const CaseEvaluation ev = evaluate_case(run_case_id, ShiftKind::InDist, members, mr, ref, options);
      const QcReport report = make_report(run_case_id, ev.metrics.mean_uncertainty, threshold, ev.metrics.mae,
                                          timestamp_or_now(run_timestamp));

      const fs::path out(run_out);
      fs::create_directories(out);
      write_volume(ev.fused, out / "fused.nii");
      write_volume(ev.uncertainty, out / "uncertainty.nii");
      write_volume(mask_to_volume(ev.body), out / "body.nii");
      const std::string text = to_json(report).dump(2) + "\n";
      write_text_file(out / "qc_report.json", text);
      std::cout << text;
      return report.verdict == Verdict::InDistribution ? kExitOk : kExitOutOfDistribution;
    }

    if (*cal) {
      EvaluationOptions options{cal_flags.resolve(cfg), false};
      const auto metrics = evaluate_cohort_directory(cal_dir, options, cal_jobs.resolve(cfg));
      const QcThreshold threshold = calibrate_from_metrics(metrics, cal_method.resolve(cfg));
      const std::string text = to_json(threshold).dump(2) + "\n";
      if (fs::path(cal_out).has_parent_path()) fs::create_directories(fs::path(cal_out).parent_path());
      write_text_file(cal_out, text);
      std::cout << text;
      return kExitOk;
    }

    if (*rep) {
      EvaluationOptions options{rep_flags.resolve(cfg), resolve_mae_full_volume(rep_mae_full, cfg)};
      const auto metrics = evaluate_cohort_directory(rep_dir, options, rep_jobs.resolve(cfg));
      if (metrics.empty()) throw Error(ErrorKind::MalformedCase, fmt::format("no case_* directories in {}", rep_dir));
      if (rep_require_mae) {
        for (const auto& m : metrics) {
          if (!m.mae) throw Error(ErrorKind::MissingReference, fmt::format("case {} has no reference CT", m.case_id));
        }
      }
      const QcThreshold threshold =
          rep_threshold_file.empty() ? calibrate_from_metrics(metrics, rep_method.resolve(cfg))
                                     : threshold_from_json(nlohmann::json::parse(read_text_file(rep_threshold_file)));
      const CohortReport report = build_cohort_report(metrics, threshold, timestamp_or_now(rep_timestamp));

      const fs::path out(rep_out);
      fs::create_directories(out);
      write_text_file(out / "report.csv", report_csv(report));
      write_text_file(out / "report.json", report_json(report).dump(2) + "\n");
      if (!rep_no_plots) {
        write_text_file(out / "strip_plot.svg", strip_plot_svg(report));
        write_text_file(out / "scatter_plot.svg", scatter_plot_svg(report));
      }
      std::cout << fmt::format("{} cases, threshold {:.2f} HU ({})\n", report.cases.size(), threshold.value,
                               threshold.method.to_string());
      return kExitOk;
    }
  } catch (const Error& e) {
    print_error(kind_name(e.kind()), e.what());
    return kExitError;
  } catch (const nlohmann::json::exception& e) {
    print_error(kind_name(ErrorKind::InvalidArgument), e.what());
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    print_error(kind_name(ErrorKind::IoFailure), e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return kExitError;
  }
  return kExitError;
}
