// dicegrad: dataset generation, epsilon calibration, gradient checks and the
// missing/empty label experiment matrix.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or config error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dicegrad/error.hpp"
#include "dicegrad/harness.hpp"
#include "dicegrad/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace dicegrad;

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailed = 1;
constexpr int kUsageError = 2;

ExperimentConfig config_or_default(const std::string& path, const std::string& task) {
  if (!path.empty()) return load_config(path);
  return default_config(parse_task(task));
}

Shape parse_shape(const std::string& text) {
  Shape s;
  char x1 = 0, x2 = 0;
  std::istringstream is(text);
  if (!(is >> s.batch >> x1 >> s.classes >> x2 >> s.voxels) || x1 != 'x' || x2 != 'x') {
    throw Error(ErrorCode::InvalidConfig, "shapes are written BxCxI, got '" + text + "'");
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dice loss reduction/epsilon analysis harness"};
  app.require_subcommand(1);

  std::string config_path, task = "binary", out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  std::string labeling = "Full";
  gen->add_option("--config", config_path, "Experiment config (JSON)");
  gen->add_option("--task", task, "binary or multiclass when no config is given");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the dataset seed");
  gen->add_option("--labeling", labeling, "Full or Partial");

  auto* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradient matrix");
  GradcheckOptions gopts;
  std::vector<std::string> shapes, schemes, variants;
  std::string report_path;
  grad->add_option("--n", gopts.instances, "Instances per matrix cell");
  grad->add_option("--seed", seed, "Base seed");
  grad->add_option("--perturb", gopts.perturb, "Add this to one analytic entry (fault injection)");
  grad->add_option("--step", gopts.step, "Central difference step");
  grad->add_option("--shapes", shapes, "Shapes as BxCxI");
  grad->add_option("--schemes", schemes, "ImageWise ClassWise BatchWise AllWise");
  grad->add_option("--epsilons", gopts.epsilons, "Numbers or 'calibrated'");
  grad->add_option("--variants", variants, "Standard and/or Leaf");
  grad->add_option("--out", report_path, "Write per-instance records to this file");

  auto* cal = app.add_subcommand("calibrate", "Mean foreground volume per subset as epsilon");
  std::string dataset_dir, scheme = "ImageWise";
  cal->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  cal->add_option("--scheme", scheme, "Reduction scheme");
  cal->add_option("--out", out, "Output JSON (stdout when omitted)");

  auto* run = app.add_subcommand("run", "Cross-validated experiment matrix");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--task", task, "binary or multiclass when no config is given");
  run->add_option("--out", out, "Run directory")->required();
  run->add_option("--seed", seed, "Override the dataset seed");
  run->add_option("--jobs", jobs, "Parallel training jobs");

  auto* rep = app.add_subcommand("report", "Combine run directories into one table");
  std::vector<std::string> runs;
  rep->add_option("runs", runs, "Run directories")->required();
  rep->add_option("--out", out, "Write the CSV table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*gen) {
      ExperimentConfig cfg = config_or_default(config_path, task);
      if (seed) cfg.dataset.seed = *seed;
      validate_config(cfg);
      const Dataset data = labeled_dataset(generate_dataset(cfg), cfg, parse_labeling(labeling));
      save_dataset(out, data);
      std::cout << "wrote " << data.samples.size() << " samples to " << out << '\n';
      return kOk;
    }
    if (*grad) {
      if (gopts.instances == 0) {
        std::cerr << "gradcheck: --n must be at least 1\n";
        return kUsageError;
      }
      if (seed) gopts.seed = *seed;
      if (!shapes.empty()) {
        gopts.shapes.clear();
        for (const auto& s : shapes) gopts.shapes.push_back(parse_shape(s));
      }
      if (!schemes.empty()) {
        gopts.schemes.clear();
        for (const auto& s : schemes) gopts.schemes.push_back(parse_scheme(s));
      }
      if (!variants.empty()) {
        gopts.variants.clear();
        for (const auto& v : variants) gopts.variants.push_back(parse_variant(v));
      }
      const GradcheckSummary summary = run_gradcheck(gopts);
      const std::string text = summary.text();
      if (!report_path.empty()) write_file(report_path, text);
      std::cout << text.substr(text.rfind('\n', text.size() - 2) + 1);
      return summary.pass() ? kOk : kVerificationFailed;
    }
    if (*cal) {
      const Dataset data = load_dataset(dataset_dir);
      const auto maps = data.gt_maps();
      const EpsilonCalibration result = calibrate_epsilon(maps, parse_scheme(scheme));
      if (result.all_empty) std::cerr << "warning: every map is empty, epsilon is 0\n";
      const std::string text = calibration_json(result);
      if (out.empty()) std::cout << text;
      else write_file(out, text);
      return kOk;
    }
    if (*run) {
      ExperimentConfig cfg = config_or_default(config_path, task);
      if (seed) cfg.dataset.seed = *seed;
      validate_config(cfg);
      const RunResult result = run_experiment(cfg, jobs);
      write_run(out, cfg, generate_dataset(cfg), result);
      std::cout << summary_csv(result, cfg.task);
      return kOk;
    }
    if (*rep) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      const ReportTable table = build_report(dirs);
      if (!out.empty()) write_file(out, table.csv());
      std::cout << table.aligned();
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}
