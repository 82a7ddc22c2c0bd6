// Command-line front end: run / ablate / sweep over a manifest, plus the
// single-stage tools augment, fuse, metrics, report and phantom.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "segtta/segtta.hpp"

namespace fs = std::filesystem;
using namespace segtta;

namespace {

struct ExperimentArgs {
  std::string config;
  std::string manifest;
  std::optional<double> tau;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
  std::string format = "csv";
  std::vector<double> taus{0.3, 0.6, 0.9};
};

void add_experiment_flags(CLI::App* cmd, ExperimentArgs& a) {
  cmd->add_option("--config", a.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--manifest", a.manifest, "dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--tau", a.tau, "voting threshold, overrides the config");
  cmd->add_option("--seed", a.seed, "random seed, overrides the config");
  cmd->add_option("--jobs", a.jobs, "worker threads, overrides the config")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "output directory; without it the report goes to stdout");
  cmd->add_option("--format", a.format, "report format")->check(CLI::IsMember({"csv", "markdown", "md"}));
}

RunConfig load_config(const ExperimentArgs& a) {
  RunConfig c = load_run_config(a.config);
  if (a.tau) c.tau = *a.tau;
  if (a.seed) c.seed = *a.seed;
  if (a.jobs) c.jobs = *a.jobs;
  validate_tau(c.tau);
  return c;
}

int run_experiment(const std::string& kind, const ExperimentArgs& a) {
  const RunConfig config = load_config(a);
  const DatasetManifest manifest = load_manifest(a.manifest);
  const ReportFormat format = report_format_from(a.format);

  PredictionCache cache;
  std::optional<RunLog> log;
  RunOptions options;
  options.cache = &cache;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    fs::remove(fs::path(a.out) / "run_log.jsonl");
    log.emplace(fs::path(a.out) / "run_log.jsonl");
    options.log = &*log;
    options.out_dir = a.out;
  }

  RunResult result;
  if (kind == "run") {
    result = run_segtta(config, manifest, options);
  } else if (kind == "ablation") {
    result = run_ablation(config, manifest, options);
  } else {
    result = run_threshold_sweep(config, manifest, a.taus, options);
  }

  std::size_t failed = 0;
  for (const auto& c : result.cases) {
    if (c.error) {
      ++failed;
      std::cerr << "case " << c.case_id << " failed: " << *c.error << '\n';
    }
  }
  if (a.out.empty()) {
    std::cout << emit_report(result, format);
  } else {
    const fs::path out(a.out);
    write_report(result, format, out / (format == ReportFormat::Csv ? "report.csv" : "report.md"));
    std::ofstream(out / "result.json") << to_json(result).dump(2) << '\n';
    std::cerr << "wrote " << out.string() << " (" << result.cases.size() - failed << "/" << result.cases.size()
              << " cases)\n";
  }
  return failed == result.cases.size() && !result.cases.empty() ? 1 : 0;
}

nlohmann::json parse_json_arg(const std::string& text) {
  if (fs::exists(text)) return read_json_file(text);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, "neither a file nor JSON: '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segtta: training-free test-time augmentation for volumetric segmentation"};
  app.require_subcommand(1);

  ExperimentArgs run_args, ablate_args, sweep_args;
  add_experiment_flags(app.add_subcommand("run", "baseline, per-augmentation and fused ensemble"), run_args);
  add_experiment_flags(app.add_subcommand("ablate", "leave-one-augmentation-out comparison"), ablate_args);
  auto* sweep = app.add_subcommand("sweep", "threshold-weighted fusion at several tau values");
  add_experiment_flags(sweep, sweep_args);
  sweep->add_option("--taus", sweep_args.taus, "thresholds to evaluate")->delimiter(',');

  std::string aug_spec, aug_in, aug_out;
  std::uint64_t aug_seed = kDefaultSeed;
  auto* augment = app.add_subcommand("augment", "apply one augmentation to a volume");
  augment->add_option("--config,--spec", aug_spec, "augmentation spec: JSON file or inline JSON")->required();
  augment->add_option("--input", aug_in, "input volume")->required()->check(CLI::ExistingFile);
  augment->add_option("--output", aug_out, "output volume (float32)")->required();
  augment->add_option("--seed", aug_seed, "random seed");

  std::vector<std::string> fuse_maps;
  std::string fuse_out, fuse_mode = "threshold_weighted", fuse_config;
  double fuse_tau = kDefaultTau;
  auto* fuse_cmd = app.add_subcommand("fuse", "fuse precomputed probability maps");
  fuse_cmd->add_option("--maps", fuse_maps, "probability maps (4D NIfTI)")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--output", fuse_out, "fused label mask")->required();
  auto* fuse_mode_opt = fuse_cmd->add_option("--mode", fuse_mode, "voting mode")
                            ->check(CLI::IsMember({"majority", "confidence_weighted", "threshold_weighted"}));
  auto* fuse_tau_opt = fuse_cmd->add_option("--tau", fuse_tau, "voting threshold");
  fuse_cmd->add_option("--config", fuse_config, "run configuration supplying voting and tau")
      ->check(CLI::ExistingFile);

  std::string pred_path, gt_path;
  int metric_classes = 2;
  auto* metrics_cmd = app.add_subcommand("metrics", "score a mask against ground truth");
  metrics_cmd->add_option("--pred", pred_path, "predicted mask")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--gt", gt_path, "ground-truth mask")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--classes", metric_classes, "number of classes")->check(CLI::Range(2, kMaxClasses));

  std::string report_in, report_out, report_format = "csv";
  auto* report_cmd = app.add_subcommand("report", "render a saved result.json");
  report_cmd->add_option("--result", report_in, "result.json from run/ablate/sweep")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--format", report_format, "report format")
      ->check(CLI::IsMember({"csv", "markdown", "md"}));
  report_cmd->add_option("--output", report_out, "output file; stdout when omitted");

  std::string ph_out;
  std::size_t ph_cases = 5;
  std::vector<std::size_t> ph_dims{32, 32, 16};
  std::vector<double> ph_spacing{1.0, 1.0, 2.0};
  int ph_classes = 2;
  std::uint64_t ph_seed = kDefaultSeed;
  auto* phantom_cmd = app.add_subcommand("phantom", "write a synthetic dataset and its manifest");
  phantom_cmd->add_option("--out", ph_out, "output directory")->required();
  phantom_cmd->add_option("--cases", ph_cases, "number of cases")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--dims", ph_dims, "nx,ny,nz")->delimiter(',')->expected(3);
  phantom_cmd->add_option("--spacing", ph_spacing, "dx,dy,dz in mm")->delimiter(',')->expected(3);
  phantom_cmd->add_option("--classes", ph_classes, "number of classes")->check(CLI::Range(2, kMaxClasses));
  phantom_cmd->add_option("--seed", ph_seed, "random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run")) return run_experiment("run", run_args);
    if (app.got_subcommand("ablate")) return run_experiment("ablation", ablate_args);
    if (app.got_subcommand("sweep")) return run_experiment("sweep", sweep_args);

    if (app.got_subcommand("augment")) {
      AugmentationSpec spec = augmentation_from_json(parse_json_arg(aug_spec));
      if (spec.name.empty()) spec.name = to_string(spec.kind);
      const Volume input = nifti::read_volume(aug_in);
      const NormalizedVolume norm = normalize_intensity(input);
      SeededRng rng(aug_seed, {input.id(), "augment|" + to_json(spec).dump()});
      const Volume out = apply(spec, norm.volume, rng);
      nifti::write_volume(out, nifti::Datatype::Float32, aug_out);
      return 0;
    }

    if (app.got_subcommand("fuse")) {
      VotingMode mode = voting_mode_from(fuse_mode);
      double tau = fuse_tau;
      if (!fuse_config.empty()) {
        const RunConfig c = load_run_config(fuse_config);
        if (!*fuse_mode_opt) mode = c.voting;
        if (!*fuse_tau_opt) tau = c.tau;
      }
      std::vector<ProbabilityMap> maps;
      for (const auto& path : fuse_maps) maps.push_back(nifti::read_probability_map(path).with_tag(path));
      const auto header = nifti::parse_header(nifti::read_file(fuse_maps.front()));
      const LabelMask mask = fuse(FusionInput(std::move(maps), mode, tau));
      nifti::write_label_mask(mask, nifti::spacing_of(header), fuse_out);
      return 0;
    }

    if (app.got_subcommand("metrics")) {
      const auto header = nifti::parse_header(nifti::read_file(gt_path));
      const LabelMask pred = nifti::read_label_mask(pred_path, metric_classes);
      const LabelMask gt = nifti::read_label_mask(gt_path, metric_classes);
      std::cout << to_json(evaluate(pred, gt, nifti::spacing_of(header))).dump(2) << '\n';
      return 0;
    }

    if (app.got_subcommand("report")) {
      const RunResult result = run_result_from_json(read_json_file(report_in));
      const ReportFormat format = report_format_from(report_format);
      if (report_out.empty()) {
        std::cout << emit_report(result, format);
      } else {
        write_report(result, format, report_out);
      }
      return 0;
    }

    if (app.got_subcommand("phantom")) {
      const Dims dims{ph_dims[0], ph_dims[1], ph_dims[2]};
      const Spacing spacing = make_spacing(ph_spacing.at(0), ph_spacing.at(1), ph_spacing.at(2));
      const fs::path out(ph_out);
      fs::create_directories(out);
      nlohmann::json entries = nlohmann::json::array();
      for (std::size_t i = 0; i < ph_cases; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "case%03zu", i);
        const Phantom p = make_phantom(dims, ph_classes, ph_seed, id, spacing);
        nifti::write_volume(p.image, nifti::Datatype::Float32, out / (std::string(id) + "_image.nii.gz"));
        nifti::write_label_mask(p.labels, spacing, out / (std::string(id) + "_label.nii.gz"));
        entries.push_back({{"id", id},
                           {"image", std::string(id) + "_image.nii.gz"},
                           {"label", std::string(id) + "_label.nii.gz"},
                           {"classes", ph_classes}});
      }
      std::ofstream(out / "manifest.json") << nlohmann::json{{"name", out.filename().string()}, {"entries", entries}}.dump(2)
                                           << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
