// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/epsilon.hpp"
#include "dicegrad/harness.hpp"
#include "dicegrad/tensor_io.hpp"

using namespace dicegrad;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " | " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

BatchTensor rand_gt(const Shape& s, std::mt19937_64& rng) {
  std::bernoulli_distribution bit(0.4);
  std::vector<double> v(s.size());
  for (auto& x : v) x = bit(rng) ? 1.0 : 0.0;
  return make_batch(s, std::move(v), Role::GroundTruth);
}

BatchTensor rand_pred(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> v(s.size());
  for (auto& x : v) x = u(rng);
  return make_batch(s, std::move(v), Role::Prediction);
}

void gradient_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckSummary summary = run_gradcheck(GradcheckOptions{});
  const double elapsed = seconds_since(t0);
  double worst_abs = 0.0;
  for (const auto& r : summary.records) worst_abs = std::max(worst_abs, r.grad.max_abs_err);
  const std::size_t n = summary.records.size();
  report(1, summary.grad_failures == 0 && n >= 4 * 3 * 4 * 100 && elapsed < 60.0,
         "analytic gradient matches central differences (h=1e-5, rel<=1e-5 or abs<=1e-9)",
         std::to_string(n) + " instances, " + std::to_string(summary.grad_failures) + " failures, worst abs err " +
             num(worst_abs) + ", " + num(elapsed) + " s");
  report(2, summary.two_value_failures == 0 && n > 0, "at most two gradient values per subset keyed by label",
         std::to_string(n) + " instances, " + std::to_string(summary.two_value_failures) + " failures");
}

void degeneracy_criterion() {
  struct Case {
    ReductionScheme a, b;
    Shape shape;
    const char* name;
  };
  const Case cases[] = {
      {ReductionScheme::ImageWise, ReductionScheme::BatchWise, {1, 3, 16}, "ImageWise=BatchWise at B=1"},
      {ReductionScheme::ClassWise, ReductionScheme::AllWise, {1, 3, 16}, "ClassWise=AllWise at B=1"},
      {ReductionScheme::BatchWise, ReductionScheme::AllWise, {4, 1, 16}, "BatchWise=AllWise at C=1"},
      {ReductionScheme::ImageWise, ReductionScheme::ClassWise, {4, 1, 16}, "ImageWise=ClassWise at C=1"},
  };
  std::mt19937_64 rng(31337);
  bool pass = true;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& c : cases) {
    for (int k = 0; k < 50; ++k) {
      const auto gt = rand_gt(c.shape, rng);
      const auto pred = rand_pred(c.shape, rng);
      DiceLossConfig ca, cb;
      ca.scheme = c.a;
      cb.scheme = c.b;
      ca.epsilon = cb.epsilon = (k % 2) ? 1e-7 : 1.0;
      const auto ea = dice_evaluate(gt, pred, ca);
      const auto eb = dice_evaluate(gt, pred, cb);
      double diff = std::abs(ea.loss.value - eb.loss.value);
      for (std::size_t i = 0; i < ea.gradient.size(); ++i) {
        diff = std::max(diff, std::abs(ea.gradient[i] - eb.gradient[i]));
      }
      worst = std::max(worst, diff);
      pass = pass && diff <= 1e-12;
      ++checked;
    }
  }
  report(3, pass, "scheme degeneracy equalities agree to 1e-12",
         std::to_string(checked) + " instances over 4 equalities, max deviation " + num(worst));
}

void balance_criterion() {
  bool pass = true;
  std::string detail;
  for (double v : {1.0, 80.0, 1000.0, 12412.0}) {
    double eps = std::nan("");
    try {
      eps = solve_balance_epsilon({0.5, 2.0, v});
    } catch (const std::exception& e) {
      detail += std::string(" error ") + e.what();
    }
    pass = pass && eps == v;
    detail += " v=" + num(v) + "->" + num(eps);
  }
  report(4, pass, "solve_balance_epsilon(a=0.5, b=2, v) == v exactly", detail.substr(1));
}

bool within_volume_limit(const CellResult& c) {
  const auto& g = c.group("corrupted", 0);
  return g.mean_pred_volume <= 0.10 * g.mean_true_volume;
}

void binary_criteria(const RunResult& run, const ExperimentConfig& cfg, double elapsed) {
  const auto& part_i = run.cell({Labeling::Partial, Setup::I, 1});
  const auto& full_i = run.cell({Labeling::Full, Setup::I, 1});
  const double dp = part_i.group("corrupted", 0).mean_dsc;
  const double df = full_i.group("corrupted", 0).mean_dsc;
  report(5, dp >= 0.95 * df && df >= 0.85 && elapsed < 300.0,
         "missing labels: setup I (B=1) still segments GradeB",
         "Partial GradeB DSC " + num(dp) + " vs Full " + num(df) + " (ratio " + num(dp / df) + "), matrix " +
             num(elapsed) + " s");

  std::vector<CellKey> empty_cells{{Labeling::Partial, Setup::BI, 4}};
  for (const auto b : cfg.batch_sizes) empty_cells.push_back({Labeling::Partial, Setup::I_eps, b});

  bool pass6 = true, pass7 = true;
  std::string d6, d7;
  for (const auto& key : empty_cells) {
    const auto& c = run.cell(key);
    const auto& full = run.cell({Labeling::Full, key.setup, key.batch_size});
    const auto& corrupted = c.group("corrupted", 0);
    const double a_ratio = c.group("always", 0).mean_dsc / full.group("always", 0).mean_dsc;
    const double v_ratio = corrupted.mean_pred_volume / corrupted.mean_true_volume;
    const bool ok6 = within_volume_limit(c) && a_ratio >= 0.9;
    pass6 = pass6 && ok6;
    d6 += " " + key.name() + ": vol " + num(v_ratio) + " GradeA " + num(a_ratio) + (ok6 ? "" : " (x)");
    const bool ok7 = c.roc.auc >= 0.85;
    pass7 = pass7 && ok7;
    d7 += " " + key.name() + ": " + num(c.roc.auc);
  }
  report(6, pass6, "empty labels: BI (B=4) and I_eps suppress GradeB volume to <=10% with GradeA DSC >= 0.9x Full",
         d6.substr(1));
  report(7, pass7, "held-out AUC of GradeA detection from predicted volume >= 0.85", d7.substr(1));
}

void calibration_criterion(const RunResult& run) {
  const auto& full_cal = run.calibrations.front().first == Labeling::Full ? run.calibrations.front().second
                                                                          : run.calibrations.back().second;
  const auto& part_cal = run.calibrations.front().first == Labeling::Partial ? run.calibrations.front().second
                                                                             : run.calibrations.back().second;
  const double ef = full_cal.per_class.at(0).second;
  const double ep = part_cal.per_class.at(0).second;
  report(9, ep < ef, "calibrated epsilon on Partial < Full for the corrupted class",
         "Partial " + num(ep) + " vs Full " + num(ef));
}

void multiclass_criterion() {
  const ExperimentConfig cfg = default_config(Task::Multiclass);
  const RunResult run = run_experiment(cfg, 1);
  const std::size_t myo = cfg.analysis_class;
  const auto& base = run.cell({Labeling::Partial, Setup::I, 2});
  const double di = base.group("all", myo).mean_dsc;
  bool pass = true;
  std::string detail = "I " + num(di);
  for (const auto setup : {Setup::Leaf, Setup::Marginal}) {
    const double d = run.cell({Labeling::Partial, setup, 2}).group("all", myo).mean_dsc;
    double p = std::nan("");
    for (const auto& c : run.comparisons) {
      if (c.a.setup == setup && c.b.setup == Setup::I && c.group == "all" && c.class_index == myo) p = c.p_value;
    }
    pass = pass && std::abs(d - di) <= 0.05 && std::isfinite(p);
    detail += ", " + std::string(to_string(setup)) + " " + num(d) + " (|diff| " + num(std::abs(d - di)) +
              ", bootstrap p " + num(p) + ")";
  }
  report(8, pass, "Leaf and Marginal held-out MYO DSC within 0.05 of setup I", detail);
}

std::vector<fs::path> csv_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void reproducibility_criterion(const ExperimentConfig& cfg, const RunResult& run, const fs::path& work) {
  const fs::path first = work / "first";
  const fs::path second = work / "second";
  fs::remove_all(first);
  fs::remove_all(second);
  write_run(first, cfg, generate_dataset(cfg), run);

  const ExperimentConfig snapshot = load_config(first / "config.json");
  write_run(second, snapshot, generate_dataset(snapshot), run_experiment(snapshot, 2));

  const auto a = csv_files(first);
  const auto b = csv_files(second);
  std::size_t differing = 0;
  for (const auto& rel : a) {
    if (!fs::exists(second / rel) || read_file(first / rel) != read_file(second / rel)) ++differing;
  }
  report(10, a == b && !a.empty() && differing == 0, "rerun from the config snapshot gives byte-identical CSVs",
         std::to_string(a.size()) + " CSV files compared, " + std::to_string(differing) + " differ");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dicegrad_acceptance";
  fs::create_directories(work);
  try {
    gradient_criteria();
    degeneracy_criterion();
    balance_criterion();

    const ExperimentConfig cfg = default_config(Task::Binary);
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult run = run_experiment(cfg, 1);
    binary_criteria(run, cfg, seconds_since(t0));
    multiclass_criterion();
    calibration_criterion(run);
    reproducibility_criterion(cfg, run, work);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
