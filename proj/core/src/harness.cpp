#include "dicegrad/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dicegrad/error.hpp"
#include "dicegrad/tensor_io.hpp"
#include "json_io.hpp"

namespace dicegrad {
namespace {

using nlohmann::json;

bool always_labeled(SampleTag tag) { return tag == SampleTag::GradeA || tag == SampleTag::PhaseED; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::vector<std::size_t> evaluated_classes(Task task) {
  if (task == Task::Binary) return {0};
  return {kLV, kMYO, kRV};
}

template <typename T, typename Parse>
std::vector<T> parse_list(const json& j, Parse parse) {
  std::vector<T> out;
  for (const auto& item : j) out.push_back(parse(item.get<std::string>()));
  return out;
}

template <typename T>
json name_list(const std::vector<T>& items) {
  json out = json::array();
  for (const auto& item : items) out.push_back(std::string(to_string(item)));
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string epsilon_label(const Epsilon& eps) {
  if (const auto* s = std::get_if<double>(&eps)) return fmt(*s);
  std::string out;
  for (const double e : std::get<std::vector<double>>(eps)) out += (out.empty() ? "" : ";") + fmt(e);
  return out;
}

}  // namespace

std::string_view to_string(Labeling labeling) { return labeling == Labeling::Full ? "Full" : "Partial"; }

std::string_view to_string(Setup setup) {
  switch (setup) {
    case Setup::I: return "I";
    case Setup::BI: return "BI";
    case Setup::I_eps: return "I_eps";
    case Setup::Leaf: return "Leaf";
    case Setup::Marginal: return "Marginal";
  }
  return "?";
}

Labeling parse_labeling(std::string_view name) {
  if (name == "Full") return Labeling::Full;
  if (name == "Partial") return Labeling::Partial;
  throw Error(ErrorCode::InvalidConfig, "unknown labeling '" + std::string(name) + "'");
}

Setup parse_setup(std::string_view name) {
  for (const auto s : {Setup::I, Setup::BI, Setup::I_eps, Setup::Leaf, Setup::Marginal}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown setup '" + std::string(name) + "'");
}

ExperimentConfig default_config(Task task) {
  ExperimentConfig cfg;
  cfg.task = task;
  cfg.dataset.seed = 7;
  if (task == Task::Binary) {
    cfg.partial = {std::nullopt, SampleTag::GradeB, PartialAction::EmptyMap};
    cfg.analysis_class = 0;
  } else {
    cfg.dataset.image_size = 48;
    cfg.setups = {Setup::I, Setup::Leaf, Setup::Marginal};
    cfg.labelings = {Labeling::Partial};
    cfg.batch_sizes = {2};
    cfg.partial = {kMYO, SampleTag::PhaseES, PartialAction::MarkUnavailable};
    cfg.analysis_class = kMYO;
  }
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (cfg.schema_version != kConfigSchemaVersion) fail("unsupported schema_version");
  try {
    validate_params(cfg.dataset, cfg.task);
  } catch (const Error& e) {
    fail(e.what());
  }
  if (cfg.labelings.empty() || cfg.setups.empty() || cfg.batch_sizes.empty()) {
    fail("labelings, setups and batch_sizes must be non-empty");
  }
  if (cfg.folds < 2) fail("need at least two folds");
  if (cfg.folds > std::min(cfg.dataset.count_a, cfg.dataset.count_b)) fail("more folds than samples per tag");
  if (!(cfg.learning_rate >= 0.0)) fail("learning rate must be non-negative");
  if (!(cfg.negligible_epsilon >= 0.0)) fail("negligible epsilon must be non-negative");
  if (cfg.bootstrap_resamples == 0) fail("bootstrap resamples must be positive");
  const std::size_t classes = cfg.task == Task::Binary ? 1 : 4;
  if (cfg.analysis_class >= classes) fail("analysis class out of range");
  if (cfg.task == Task::Multiclass && cfg.analysis_class == 0) fail("analysis class must be a foreground class");
  for (const auto b : cfg.batch_sizes) {
    if (b < 1) fail("batch sizes must be >= 1");
  }
  for (const auto s : cfg.setups) {
    if (s == Setup::Marginal && cfg.task == Task::Binary) {
      fail("Marginal needs a softmax multiclass task");
    }
  }
}

ExperimentConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> known{"schema_version", "task",       "dataset",          "labelings",
                                           "setups",         "batch_sizes", "folds",            "train",
                                           "negligible_epsilon", "partial", "analysis_class", "bootstrap"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
  try {
    ExperimentConfig cfg = default_config(parse_task(j.value("task", std::string("binary"))));
    cfg.schema_version = j.value("schema_version", cfg.schema_version);
    if (j.contains("dataset")) {
      json merged = params_to_json(cfg.dataset);
      merged.merge_patch(j.at("dataset"));
      cfg.dataset = params_from_json(merged);
    }
    if (j.contains("labelings")) cfg.labelings = parse_list<Labeling>(j.at("labelings"), parse_labeling);
    if (j.contains("setups")) cfg.setups = parse_list<Setup>(j.at("setups"), parse_setup);
    if (j.contains("batch_sizes")) cfg.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
    cfg.folds = j.value("folds", cfg.folds);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
      cfg.iterations = t.value("iterations", cfg.iterations);
      cfg.train_seed = t.value("seed", cfg.train_seed);
      cfg.include_background_in_loss = t.value("include_background_in_loss", cfg.include_background_in_loss);
    }
    cfg.negligible_epsilon = j.value("negligible_epsilon", cfg.negligible_epsilon);
    if (j.contains("partial")) {
      const auto& p = j.at("partial");
      if (p.contains("target_class")) {
        cfg.partial.target_class = p.at("target_class").is_null()
                                       ? std::nullopt
                                       : std::optional<std::size_t>(p.at("target_class").get<std::size_t>());
      }
      if (p.contains("target_tag")) {
        cfg.partial.target_tag = p.at("target_tag").is_null()
                                     ? std::nullopt
                                     : std::optional<SampleTag>(parse_tag(p.at("target_tag").get<std::string>()));
      }
      if (p.contains("action")) cfg.partial.action = parse_action(p.at("action").get<std::string>());
    }
    cfg.analysis_class = j.value("analysis_class", cfg.analysis_class);
    if (j.contains("bootstrap")) {
      cfg.bootstrap_resamples = j.at("bootstrap").value("resamples", cfg.bootstrap_resamples);
      cfg.bootstrap_seed = j.at("bootstrap").value("seed", cfg.bootstrap_seed);
    }
    validate_config(cfg);
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["task"] = std::string(to_string(cfg.task));
  j["dataset"] = params_to_json(cfg.dataset);
  j["labelings"] = name_list(cfg.labelings);
  j["setups"] = name_list(cfg.setups);
  j["batch_sizes"] = cfg.batch_sizes;
  j["folds"] = cfg.folds;
  j["train"] = {{"learning_rate", cfg.learning_rate},
                {"iterations", cfg.iterations},
                {"seed", cfg.train_seed},
                {"include_background_in_loss", cfg.include_background_in_loss}};
  j["negligible_epsilon"] = cfg.negligible_epsilon;
  j["partial"] = {{"target_class", cfg.partial.target_class ? json(*cfg.partial.target_class) : json()},
                  {"target_tag", cfg.partial.target_tag ? json(std::string(to_string(*cfg.partial.target_tag)))
                                                        : json()},
                  {"action", std::string(to_string(cfg.partial.action))}};
  j["analysis_class"] = cfg.analysis_class;
  j["bootstrap"] = {{"resamples", cfg.bootstrap_resamples}, {"seed", cfg.bootstrap_seed}};
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

Dataset generate_dataset(const ExperimentConfig& cfg) {
  return cfg.task == Task::Binary ? generate_binary(cfg.dataset, cfg.dataset.seed)
                                  : generate_multiclass(cfg.dataset, cfg.dataset.seed);
}

Dataset labeled_dataset(const Dataset& full, const ExperimentConfig& cfg, Labeling labeling) {
  return labeling == Labeling::Full ? full : apply_partial(full, cfg.partial);
}

std::vector<std::size_t> assign_folds(const Dataset& dataset, std::size_t folds, std::uint64_t seed) {
  if (folds < 1) throw Error(ErrorCode::InvalidConfig, "need at least one fold");
  std::map<SampleTag, std::vector<std::size_t>> by_tag;
  for (std::size_t k = 0; k < dataset.samples.size(); ++k) by_tag[dataset.samples[k].tag].push_back(k);
  std::mt19937_64 rng(seed ^ 0xF01D5EEDull);
  std::vector<std::size_t> fold_of(dataset.samples.size(), 0);
  for (auto& [tag, members] : by_tag) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) fold_of[members[k]] = k % folds;
  }
  return fold_of;
}

DiceLossConfig setup_loss(Setup setup, const ExperimentConfig& cfg, const EpsilonCalibration& calibration) {
  DiceLossConfig loss;
  loss.epsilon = cfg.negligible_epsilon;
  switch (setup) {
    case Setup::I: break;
    case Setup::BI: loss.scheme = ReductionScheme::BatchWise; break;
    case Setup::I_eps: loss.epsilon = calibration.to_epsilon(); break;
    case Setup::Leaf: loss.variant = DiceVariant::Leaf; break;
    case Setup::Marginal: loss.variant = DiceVariant::Marginal; break;
  }
  return loss;
}

std::string CellKey::name() const {
  return std::string(to_string(labeling)) + "_" + std::string(to_string(setup)) + "_B" + std::to_string(batch_size);
}

const GroupSummary& CellResult::group(std::string_view name, std::size_t class_index) const {
  for (const auto& g : summary) {
    if (g.group == name && g.class_index == class_index) return g;
  }
  throw Error(ErrorCode::InvalidConfig, "no summary group " + std::string(name));
}

const CellResult& RunResult::cell(const CellKey& key) const {
  for (const auto& c : cells) {
    if (c.key == key) return c;
  }
  throw Error(ErrorCode::InvalidConfig, "run has no cell " + key.name());
}

namespace {

double metric_of(const SubjectRecord& r, std::size_t class_index, bool dsc) {
  for (const auto& m : r.metrics.classes) {
    if (m.class_index == class_index) return dsc ? m.dsc : m.delta_v;
  }
  throw Error(ErrorCode::InvalidConfig, "class not evaluated");
}

std::vector<GroupSummary> summarize(const std::vector<SubjectRecord>& subjects, Task task) {
  std::vector<GroupSummary> out;
  for (const char* group : {"always", "corrupted", "all"}) {
    for (const std::size_t c : evaluated_classes(task)) {
      GroupSummary g{group, c, 0, 0, 0, 0, 0};
      for (const auto& s : subjects) {
        const bool in = std::string_view(group) == "all" ||
                        (std::string_view(group) == "always") == always_labeled(s.tag);
        if (!in) continue;
        for (const auto& m : s.metrics.classes) {
          if (m.class_index != c) continue;
          ++g.subjects;
          g.mean_dsc += m.dsc;
          g.mean_delta_v += m.delta_v;
          g.mean_pred_volume += m.pred_volume;
          g.mean_true_volume += m.true_volume;
        }
      }
      if (g.subjects > 0) {
        const auto n = static_cast<double>(g.subjects);
        g.mean_dsc /= n;
        g.mean_delta_v /= n;
        g.mean_pred_volume /= n;
        g.mean_true_volume /= n;
      }
      out.push_back(g);
    }
  }
  return out;
}

Comparison compare_cells(const std::string& kind, const CellResult& a, const CellResult& b, const std::string& group,
                         std::size_t class_index, const ExperimentConfig& cfg) {
  std::map<std::uint64_t, double> lookup;
  for (const auto& r : b.subjects) lookup[r.subject_id] = metric_of(r, class_index, true);
  std::vector<double> va, vb;
  for (const auto& r : a.subjects) {
    const bool in = group == "all" || (group == "always") == always_labeled(r.tag);
    if (!in || !lookup.contains(r.subject_id)) continue;
    va.push_back(metric_of(r, class_index, true));
    vb.push_back(lookup.at(r.subject_id));
  }
  Comparison cmp{kind, a.key, b.key, group, class_index, mean_of(va), mean_of(vb), 1.0};
  if (va.size() >= 2) cmp.p_value = bootstrap_compare(va, vb, cfg.bootstrap_resamples, cfg.bootstrap_seed);
  return cmp;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  validate_config(cfg);
  const Dataset full = generate_dataset(cfg);
  const auto fold_of = assign_folds(full, cfg.folds, cfg.dataset.seed);

  RunResult result;
  std::map<Labeling, Dataset> views;
  for (const auto labeling : cfg.labelings) {
    Dataset view = labeled_dataset(full, cfg, labeling);
    const auto maps = view.gt_maps();
    result.calibrations.emplace_back(labeling, calibrate_epsilon(maps, ReductionScheme::ImageWise));
    views.emplace(labeling, std::move(view));
  }
  const auto calibration_for = [&](Labeling labeling) -> const EpsilonCalibration& {
    for (const auto& [l, c] : result.calibrations) {
      if (l == labeling) return c;
    }
    throw Error(ErrorCode::InvalidConfig, "missing calibration");
  };

  for (const auto labeling : cfg.labelings) {
    for (const auto setup : cfg.setups) {
      for (const auto b : cfg.batch_sizes) {
        CellResult cell;
        cell.key = {labeling, setup, b};
        cell.epsilon = epsilon_label(setup_loss(setup, cfg, calibration_for(labeling)).epsilon);
        cell.folds.resize(cfg.folds);
        result.cells.push_back(std::move(cell));
      }
    }
  }

  // One job per (cell, fold); each writes only its own slot.
  std::vector<std::vector<std::vector<SubjectRecord>>> records(result.cells.size(),
                                                               std::vector<std::vector<SubjectRecord>>(cfg.folds));
  const std::size_t total_jobs = result.cells.size() * cfg.folds;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(total_jobs);
  const auto worker = [&] {
    for (std::size_t job = next++; job < total_jobs; job = next++) {
      try {
        const std::size_t ci = job / cfg.folds;
        const std::size_t fold = job % cfg.folds;
        CellResult& cell = result.cells[ci];
        const Dataset& train_view = views.at(cell.key.labeling);
        std::vector<std::size_t> train_idx, eval_idx;
        for (std::size_t k = 0; k < full.samples.size(); ++k) (fold_of[k] == fold ? eval_idx : train_idx).push_back(k);

        TrainConfig tc;
        tc.loss = setup_loss(cell.key.setup, cfg, calibration_for(cell.key.labeling));
        tc.batch_size = cell.key.batch_size;
        tc.learning_rate = cfg.learning_rate;
        tc.iterations = cfg.iterations;
        tc.seed = cfg.train_seed * 1000003ull + fold;
        tc.include_background_in_loss = cfg.include_background_in_loss;
        TrainResult trained = train(train_view, tc, train_idx);

        const auto classes = evaluated_classes(cfg.task);
        for (const std::size_t k : eval_idx) {
          const auto& sample = full.samples[k];
          const BatchTensor hard = binarize(predict(trained.model, sample.image), trained.model.head);
          records[ci][fold].push_back(
              {sample.subject_id, sample.tag, fold, subject_metrics(sample.subject_id, sample.gt, hard, classes)});
        }
        cell.folds[fold] = {std::move(trained.model), std::move(trained.history)};
      } catch (...) {
        errors[job] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, total_jobs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t ci = 0; ci < result.cells.size(); ++ci) {
    auto& cell = result.cells[ci];
    for (auto& fold_records : records[ci]) {
      cell.subjects.insert(cell.subjects.end(), fold_records.begin(), fold_records.end());
    }
    std::sort(cell.subjects.begin(), cell.subjects.end(),
              [](const SubjectRecord& l, const SubjectRecord& r) { return l.subject_id < r.subject_id; });
    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& s : cell.subjects) {
      for (const auto& m : s.metrics.classes) {
        if (m.class_index == cfg.analysis_class) scores.push_back(m.pred_volume);
      }
      labels.push_back(always_labeled(s.tag));
    }
    cell.roc = roc_auc(scores, labels);
    cell.summary = summarize(cell.subjects, cfg.task);
  }

  for (const auto setup : cfg.setups) {
    for (const auto b : cfg.batch_sizes) {
      const CellKey full_key{Labeling::Full, setup, b};
      const CellKey partial_key{Labeling::Partial, setup, b};
      const auto has = [&](const CellKey& k) {
        return std::any_of(result.cells.begin(), result.cells.end(), [&](const CellResult& c) { return c.key == k; });
      };
      if (has(full_key) && has(partial_key)) {
        for (const char* group : {"always", "corrupted"}) {
          result.comparisons.push_back(compare_cells("Partial-vs-Full", result.cell(partial_key),
                                                     result.cell(full_key), group, cfg.analysis_class, cfg));
        }
      }
      for (const auto labeling : cfg.labelings) {
        const CellKey base{labeling, Setup::I, b};
        const CellKey other{labeling, setup, b};
        if (setup == Setup::I || !has(base) || !has(other)) continue;
        for (const char* group : {"always", "corrupted", "all"}) {
          result.comparisons.push_back(compare_cells(std::string(to_string(setup)) + "-vs-I", result.cell(other),
                                                     result.cell(base), group, cfg.analysis_class, cfg));
        }
      }
    }
  }
  return result;
}

std::string metrics_csv(const CellResult& cell, Task task) {
  const auto names = class_names(task);
  std::ostringstream os;
  os << "row,subject_id,tag,fold,class,dsc,delta_v,pred_volume,true_volume\n";
  for (const auto& s : cell.subjects) {
    for (const auto& m : s.metrics.classes) {
      os << "subject," << s.subject_id << ',' << to_string(s.tag) << ',' << s.fold << ',' << names[m.class_index]
         << ',' << fmt(m.dsc) << ',' << fmt(m.delta_v) << ',' << fmt(m.pred_volume) << ',' << fmt(m.true_volume)
         << '\n';
    }
  }
  for (const auto& g : cell.summary) {
    os << "mean,," << g.group << ",," << names[g.class_index] << ',' << fmt(g.mean_dsc) << ','
       << fmt(g.mean_delta_v) << ',' << fmt(g.mean_pred_volume) << ',' << fmt(g.mean_true_volume) << '\n';
  }
  return os.str();
}

std::string roc_csv(const RocCurve& roc) {
  std::ostringstream os;
  os << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) os << fmt(p.threshold) << ',' << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
  os << "# auc," << fmt(roc.auc) << '\n';
  return os.str();
}

std::string summary_csv(const RunResult& result, Task task) {
  const auto names = class_names(task);
  std::ostringstream os;
  os << "labeling,setup,batch_size,epsilon,group,class,subjects,mean_dsc,mean_delta_v,mean_pred_volume,"
        "mean_true_volume,auc\n";
  for (const auto& cell : result.cells) {
    for (const auto& g : cell.summary) {
      os << to_string(cell.key.labeling) << ',' << to_string(cell.key.setup) << ',' << cell.key.batch_size << ','
         << cell.epsilon << ',' << g.group << ',' << names[g.class_index] << ',' << g.subjects << ','
         << fmt(g.mean_dsc) << ',' << fmt(g.mean_delta_v) << ',' << fmt(g.mean_pred_volume) << ','
         << fmt(g.mean_true_volume) << ',' << fmt(cell.roc.auc) << '\n';
    }
  }
  return os.str();
}

std::string comparisons_csv(const RunResult& result) {
  std::ostringstream os;
  os << "kind,cell_a,cell_b,group,class,mean_dsc_a,mean_dsc_b,p_value\n";
  for (const auto& c : result.comparisons) {
    os << c.kind << ',' << c.a.name() << ',' << c.b.name() << ',' << c.group << ',' << c.class_index << ','
       << fmt(c.mean_a) << ',' << fmt(c.mean_b) << ',' << fmt(c.p_value) << '\n';
  }
  return os.str();
}

std::string calibration_json(const EpsilonCalibration& calibration) {
  json j;
  j["scheme"] = std::string(to_string(calibration.scheme));
  if (calibration.global) {
    j["global"] = *calibration.global;
  } else {
    j["per_class"] = json::array();
    for (const auto& [c, e] : calibration.per_class) j["per_class"].push_back({{"class", c}, {"epsilon", e}});
  }
  j["all_empty"] = calibration.all_empty;
  return j.dump(2) + "\n";
}

void write_run(const std::filesystem::path& out, const ExperimentConfig& cfg, const Dataset& dataset,
               const RunResult& result) {
  std::filesystem::create_directories(out);
  write_file(out / "config.json", dump_config(cfg));
  save_dataset(out / "dataset", dataset);
  json eps = json::object();
  for (const auto& [labeling, cal] : result.calibrations) {
    eps[std::string(to_string(labeling))] = json::parse(calibration_json(cal));
  }
  write_file(out / "epsilon.json", eps.dump(2) + "\n");
  for (const auto& cell : result.cells) {
    const auto dir = out / "cells" / cell.key.name();
    for (std::size_t f = 0; f < cell.folds.size(); ++f) {
      write_file(dir / ("fold" + std::to_string(f) + ".ckpt"), encode_checkpoint(cell.folds[f].model));
      write_file(dir / ("history_fold" + std::to_string(f) + ".csv"),
                 history_csv(cell.folds[f].history, dataset.classes()));
    }
    write_file(dir / "metrics.csv", metrics_csv(cell, cfg.task));
    write_file(dir / "roc.csv", roc_csv(cell.roc));
  }
  write_file(out / "summary.csv", summary_csv(result, cfg.task));
  write_file(out / "comparisons.csv", comparisons_csv(result));
}

// ---------------------------------------------------------------------------
// Gradient verification matrix

std::string GradcheckSummary::text() const {
  std::ostringstream os;
  for (const auto& r : records) {
    os << "seed=" << r.seed << " scheme=" << to_string(r.scheme) << " variant=" << to_string(r.variant)
       << " shape=" << r.shape.batch << 'x' << r.shape.classes << 'x' << r.shape.voxels << " eps=" << r.epsilon_label
       << '(' << fmt(r.epsilon) << ')' << std::scientific << std::setprecision(3)
       << " max_abs=" << r.grad.max_abs_err << " max_rel=" << r.grad.max_rel_err << std::defaultfloat
       << " worst=" << r.grad.worst_index << " two_value=" << (r.two_value ? "pass" : "fail")
       << " pass=" << (r.grad.pass && r.two_value ? "true" : "false") << '\n';
  }
  os << "instances=" << records.size() << " grad_failures=" << grad_failures
     << " two_value_failures=" << two_value_failures << '\n';
  return os.str();
}

GradcheckSummary run_gradcheck(const GradcheckOptions& options) {
  if (options.instances == 0) throw Error(ErrorCode::InvalidConfig, "instance count must be >= 1");
  GradcheckSummary summary;
  std::uint64_t instance = 0;
  for (const auto& shape : options.shapes) {
    validate_shape(shape);
    for (const auto scheme : options.schemes) {
      for (const auto variant : options.variants) {
        if (variant == DiceVariant::Marginal) {
          throw Error(ErrorCode::InvalidConfig, "gradcheck perturbs predictions directly; Marginal is not supported");
        }
        for (const auto& eps_label : options.epsilons) {
          for (std::size_t n = 0; n < options.instances; ++n, ++instance) {
            const std::uint64_t seed = options.seed * 0x100000001B3ull + instance;
            std::mt19937_64 rng(seed);
            const double density = std::uniform_real_distribution<double>(0.1, 0.6)(rng);
            std::bernoulli_distribution label(density);
            std::uniform_real_distribution<double> prob(0.01, 0.99);
            std::vector<double> y(shape.size()), p(shape.size());
            for (auto& v : y) v = label(rng) ? 1.0 : 0.0;
            for (auto& v : p) v = prob(rng);
            const BatchTensor gt = make_batch(shape, std::move(y), Role::GroundTruth);
            const BatchTensor pred = make_batch(shape, std::move(p), Role::Prediction);

            DiceLossConfig cfg;
            cfg.scheme = scheme;
            cfg.variant = variant;
            double eps_value = 0.0;
            if (eps_label == "calibrated") {
              const BatchTensor maps[] = {gt};
              const auto cal = calibrate_epsilon(maps, scheme);
              cfg.epsilon = cal.to_epsilon();
              const auto e = cfg.epsilon;
              eps_value = std::holds_alternative<double>(e)
                              ? std::get<double>(e)
                              : mean_of(std::get<std::vector<double>>(e));
            } else {
              try {
                eps_value = std::stod(eps_label);
              } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidConfig, "epsilon must be a number or 'calibrated'");
              }
              cfg.epsilon = eps_value;
            }

            auto analytic = dice_backward(gt, pred, cfg).to_vector();
            if (options.perturb != 0.0) analytic[0] += options.perturb;
            const BatchTensor analytic_t(shape, std::move(analytic));
            const BatchTensor numeric = finite_diff_grad(gt, pred, cfg, options.step);

            GradcheckRecord rec{seed, scheme, variant, shape, eps_label, eps_value, compare_grads(analytic_t, numeric),
                                true};
            rec.two_value = check_two_value(gt, analytic_t, enumerate_subsets(scheme, shape)).pass;
            summary.grad_failures += rec.grad.pass ? 0 : 1;
            summary.two_value_failures += rec.two_value ? 0 : 1;
            summary.records.push_back(std::move(rec));
          }
        }
      }
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Report

std::string ReportTable::csv() const {
  std::ostringstream os;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string ReportTable::aligned() const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t k = 0; k < header.size(); ++k) width[k] = header[k].size();
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size() && k < width.size(); ++k) width[k] = std::max(width[k], r[k].size());
  }
  std::ostringstream os;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      os << (k ? "  " : "") << std::setw(static_cast<int>(width[k])) << cells[k];
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

ReportTable build_report(const std::vector<std::filesystem::path>& runs) {
  if (runs.empty()) throw Error(ErrorCode::InvalidConfig, "report needs at least one run directory");

  struct LoadedCell {
    CellResult cell;
    std::string run;
  };
  std::vector<LoadedCell> cells;
  std::optional<ExperimentConfig> first_cfg;

  for (const auto& dir : runs) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::IoError, "no run directory " + dir.string());
    const ExperimentConfig cfg = load_config(dir / "config.json");
    if (first_cfg && (first_cfg->task != cfg.task || first_cfg->dataset != cfg.dataset)) {
      throw Error(ErrorCode::InvalidConfig, "runs were produced from different datasets");
    }
    if (!first_cfg) first_cfg = cfg;
    const auto names = class_names(cfg.task);
    for (const auto labeling : cfg.labelings) {
      for (const auto setup : cfg.setups) {
        for (const auto b : cfg.batch_sizes) {
          LoadedCell lc{{}, dir.filename().string()};
          lc.cell.key = {labeling, setup, b};
          const auto cell_dir = dir / "cells" / lc.cell.key.name();
          std::istringstream metrics(read_file(cell_dir / "metrics.csv"));
          std::string line;
          std::getline(metrics, line);
          std::map<std::uint64_t, SubjectRecord> subjects;
          while (std::getline(metrics, line)) {
            const auto f = split_csv_line(line);
            if (f.size() != 9) throw Error(ErrorCode::FormatError, "malformed metrics row in " + cell_dir.string());
            const std::size_t cls = static_cast<std::size_t>(
                std::find(names.begin(), names.end(), f[4]) - names.begin());
            if (f[0] == "subject") {
              auto& rec = subjects[std::stoull(f[1])];
              rec.subject_id = std::stoull(f[1]);
              rec.tag = parse_tag(f[2]);
              rec.fold = std::stoul(f[3]);
              rec.metrics.subject_id = rec.subject_id;
              rec.metrics.classes.push_back({cls, std::stod(f[5]), std::stod(f[6]), std::stod(f[7]), std::stod(f[8])});
            } else {
              lc.cell.summary.push_back({f[2], cls, 0, std::stod(f[5]), std::stod(f[6]), std::stod(f[7]),
                                         std::stod(f[8])});
            }
          }
          for (auto& [id, rec] : subjects) lc.cell.subjects.push_back(std::move(rec));
          std::istringstream roc(read_file(cell_dir / "roc.csv"));
          while (std::getline(roc, line)) {
            if (line.rfind("# auc,", 0) == 0) lc.cell.roc.auc = std::stod(line.substr(6));
          }
          cells.push_back(std::move(lc));
        }
      }
    }
  }

  const ExperimentConfig& cfg = *first_cfg;
  const std::size_t cls = cfg.analysis_class;
  const bool any_full = std::any_of(cells.begin(), cells.end(), [](const LoadedCell& c) {
    return c.cell.key.labeling == Labeling::Full;
  });
  const bool any_partial = std::any_of(cells.begin(), cells.end(), [](const LoadedCell& c) {
    return c.cell.key.labeling == Labeling::Partial;
  });
  const bool comparable = any_full && any_partial;

  ReportTable table;
  table.header = {"run", "labeling", "B", "setup", "dsc_always", "dsc_corrupted", "dv_always", "dv_corrupted", "auc"};
  if (comparable) {
    table.header.push_back("p_always_vs_full");
    table.header.push_back("p_corrupted_vs_full");
  }
  for (const auto& lc : cells) {
    const auto& c = lc.cell;
    const auto& always = c.group("always", cls);
    const auto& corrupted = c.group("corrupted", cls);
    std::vector<std::string> row{lc.run,
                                 std::string(to_string(c.key.labeling)),
                                 std::to_string(c.key.batch_size),
                                 std::string(to_string(c.key.setup)),
                                 fmt(always.mean_dsc),
                                 fmt(corrupted.mean_dsc),
                                 fmt(always.mean_delta_v),
                                 fmt(corrupted.mean_delta_v),
                                 fmt(c.roc.auc)};
    if (comparable) {
      const LoadedCell* ref = nullptr;
      if (c.key.labeling == Labeling::Partial) {
        for (const auto& other : cells) {
          if (other.cell.key == CellKey{Labeling::Full, c.key.setup, c.key.batch_size}) ref = &other;
        }
      }
      for (const char* group : {"always", "corrupted"}) {
        row.push_back(ref ? fmt(compare_cells("Partial-vs-Full", c, ref->cell, group, cls, cfg).p_value) : "");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dicegrad
