#include "ktbench/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include "ktbench/ingest.hpp"

namespace ktbench {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTrainKeys = {"learning_rate", "dropout", "seed", "batch_size"};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"dropout", t.dropout},       {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},       {"patience", t.patience},     {"seed", t.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t = {}) {
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(t.learning_rate);
  if (j.contains("dropout")) j.at("dropout").get_to(t.dropout);
  if (j.contains("batch_size")) j.at("batch_size").get_to(t.batch_size);
  if (j.contains("max_epochs")) j.at("max_epochs").get_to(t.max_epochs);
  if (j.contains("patience")) j.at("patience").get_to(t.patience);
  if (j.contains("seed")) j.at("seed").get_to(t.seed);
  return t;
}

std::set<std::string> ids_of(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

FoldResult run_fold(const Dataset& dataset, const Split& split, const RunSpec& spec, int fold,
                    const CrossValidateOptions& options) {
  std::set<std::string> train_ids;
  for (std::size_t f = 0; f < kNumFolds; ++f)
    if (int(f) != fold) train_ids.insert(split.folds[f].begin(), split.folds[f].end());
  const auto train_seqs = expand_students(dataset, train_ids);
  const auto val_seqs = expand_students(dataset, ids_of(split.folds[std::size_t(fold)]));
  const auto windows = window_all(train_seqs, spec.max_length);

  nlohmann::json hyper = spec.hyperparameters;
  if (spec.model == "sakt" && !hyper.contains("max_length")) hyper["max_length"] = spec.max_length;
  auto model = make_model(spec.model, num_items(dataset), hyper, spec.train.seed);

  TrainConfig cfg = spec.train;
  cfg.fold_label = "fold " + std::to_string(fold);
  const auto history = train(*model, windows, std::span<const ExpandedSequence>(val_seqs), cfg);

  FoldResult r;
  r.fold = fold;
  r.initial_val_auc = history.initial_val_auc;
  r.val_auc = history.best_val_auc;
  r.best_epoch = history.best_epoch;
  r.epochs_run = history.epochs_run;
  if (options.evaluate_test) {
    r.test = eval_question_level(*model, dataset, split, options.eval, options.cutoff);
    r.test->records.clear();
  }
  if (!options.checkpoint_dir.empty()) {
    fs::create_directories(options.checkpoint_dir);
    const auto path = options.checkpoint_dir / ("fold" + std::to_string(fold) + ".json");
    save_checkpoint(*model, path);
    r.checkpoint = path.string();
  }
  return r;
}

std::optional<MetricResult> metric_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  MetricResult m;
  m.auc = j.at("auc");
  m.accuracy = j.at("accuracy");
  m.n_pos = j.at("n_pos");
  m.n_neg = j.at("n_neg");
  return m;
}

}  // namespace

nlohmann::json to_json(const RunSpec& spec) {
  return {{"model", spec.model},
          {"hyperparameters", spec.hyperparameters},
          {"train", to_json(spec.train)},
          {"max_length", spec.max_length}};
}

RunSpec run_spec_from_json(const nlohmann::json& j) {
  RunSpec spec;
  if (j.contains("model")) j.at("model").get_to(spec.model);
  if (j.contains("hyperparameters")) spec.hyperparameters = j.at("hyperparameters");
  spec.train.batch_size = default_batch_size(spec.model);
  if (j.contains("train")) spec.train = train_config_from_json(j.at("train"), spec.train);
  if (j.contains("max_length")) j.at("max_length").get_to(spec.max_length);
  return spec;
}

std::string config_hash(const nlohmann::json& canonical) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunSpec& spec) { return config_hash(to_json(spec)); }

fs::path ExperimentConfig::split_path() const {
  return split_file.empty() ? fs::path(output_dir) / "split.json" : fs::path(split_file);
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json pcts = c.observed_pcts;
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  return {{"dataset", c.dataset},
          {"run", to_json(c.run)},
          {"split_seed", c.split_seed},
          {"split_file", c.split_file},
          {"output_dir", c.output_dir},
          {"fusion", to_string(c.eval.fusion)},
          {"threshold", c.eval.threshold},
          {"cutoff", c.cutoff},
          {"observed_pcts", pcts},
          {"modes", modes},
          {"accumulative_feedback", to_string(c.feedback)},
          {"sweep", {{"budget", c.sweep.budget}, {"seed", c.sweep.seed}, {"space", c.sweep.space}}},
          {"jobs", c.jobs}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
  if (j.contains("run")) c.run = run_spec_from_json(j.at("run"));
  else c.run.train.batch_size = default_batch_size(c.run.model);
  if (j.contains("split_seed")) j.at("split_seed").get_to(c.split_seed);
  if (j.contains("split_file")) j.at("split_file").get_to(c.split_file);
  if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
  if (j.contains("fusion")) c.eval.fusion = parse_fusion(j.at("fusion").get<std::string>());
  if (j.contains("threshold")) j.at("threshold").get_to(c.eval.threshold);
  if (j.contains("cutoff")) j.at("cutoff").get_to(c.cutoff);
  if (j.contains("observed_pcts")) j.at("observed_pcts").get_to(c.observed_pcts);
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) c.modes.push_back(parse_mode(m.get<std::string>()));
  }
  if (j.contains("accumulative_feedback")) {
    const auto f = j.at("accumulative_feedback").get<std::string>();
    if (f == "label") c.feedback = Feedback::Label;
    else if (f == "probability") c.feedback = Feedback::Probability;
    else throw Error("accumulative_feedback must be 'label' or 'probability'");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    if (s.contains("budget")) s.at("budget").get_to(c.sweep.budget);
    if (s.contains("seed")) s.at("seed").get_to(c.sweep.seed);
    if (s.contains("space")) c.sweep.space = s.at("space");
  }
  if (j.contains("jobs")) j.at("jobs").get_to(c.jobs);
  if (c.sweep.budget < 1) throw Error("sweep budget must be >= 1");
  if (c.cutoff < 1) throw Error("cutoff must be >= 1");
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_config_from_json(read_json(path));
}

int default_batch_size(const std::string& model) { return model == "sakt" ? 64 : 256; }

nlohmann::json default_search_space(const std::string& model) {
  nlohmann::json space = {{"learning_rate", {1e-3, 1e-4, 1e-5}},
                          {"dropout", {0.05, 0.1, 0.3, 0.5}},
                          {"seed", {42, 3407}},
                          {"embedding_size", {64, 256}}};
  if (model == "dkt+") {
    space["lambda_r"] = {0, 0.05, 0.1, 0.15, 0.2, 0.25};
    space["lambda_w1"] = {0, 0.01, 0.03, 0.1, 0.3, 1};
    space["lambda_w2"] = {0, 0.3, 1, 3, 10, 30, 100};
  } else if (model == "sakt") {
    space["num_blocks"] = {1, 2, 4};
    space["num_heads"] = {4, 8};
  } else if (model != "dkt") {
    throw Error("no default search space for model '" + model + "'; give sweep.space explicitly");
  }
  return space;
}

std::vector<double> RunRecord::val_aucs() const {
  std::vector<double> v;
  for (const auto& f : folds) v.push_back(f.val_auc);
  return v;
}

std::vector<double> RunRecord::test_aucs() const {
  std::vector<double> v;
  for (const auto& f : folds)
    if (f.test) v.push_back(f.test->question.auc);
  return v;
}

std::vector<double> RunRecord::test_accuracies() const {
  std::vector<double> v;
  for (const auto& f : folds)
    if (f.test) v.push_back(f.test->question.accuracy);
  return v;
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"initial_val_auc", f.initial_val_auc},
                     {"val_auc", f.val_auc},
                     {"best_epoch", f.best_epoch},
                     {"epochs_run", f.epochs_run},
                     {"test", f.test ? to_json(*f.test) : nlohmann::json(nullptr)},
                     {"checkpoint", f.checkpoint}});
  }
  nlohmann::json summary = {{"val_auc", format_mean_std(mean_std(r.val_aucs()))}};
  if (!r.test_aucs().empty()) {
    summary["test_auc"] = format_mean_std(mean_std(r.test_aucs()));
    summary["test_accuracy"] = format_mean_std(mean_std(r.test_accuracies()));
  }
  return {{"config_hash", r.config_hash}, {"config", to_json(r.spec)}, {"seed", r.seed},
          {"wall_time_s", r.wall_time_s}, {"folds", folds},            {"summary", summary}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash");
  r.spec = run_spec_from_json(j.at("config"));
  r.seed = j.at("seed");
  r.wall_time_s = j.at("wall_time_s");
  for (const auto& f : j.at("folds")) {
    FoldResult fr;
    fr.fold = f.at("fold");
    fr.initial_val_auc = f.at("initial_val_auc");
    fr.val_auc = f.at("val_auc");
    fr.best_epoch = f.at("best_epoch");
    fr.epochs_run = f.at("epochs_run");
    fr.checkpoint = f.at("checkpoint");
    const auto& t = f.at("test");
    if (!t.is_null()) {
      QuestionLevelResult q;
      q.question = *metric_from_json(t.at("question_level"));
      q.kc = *metric_from_json(t.at("kc_level"));
      q.long_group = metric_from_json(t.at("long"));
      q.short_group = metric_from_json(t.at("short"));
      q.n_long = t.at("n_long");
      q.n_short = t.at("n_short");
      fr.test = std::move(q);
    }
    r.folds.push_back(std::move(fr));
  }
  return r;
}

void save_run_record(const RunRecord& record, const fs::path& path) { write_json(to_json(record), path); }

RunRecord load_run_record(const fs::path& path) { return run_record_from_json(read_json(path)); }

std::vector<RunRecord> load_run_records(const fs::path& runs_dir) {
  std::vector<fs::path> files;
  if (fs::is_directory(runs_dir))
    for (const auto& e : fs::directory_iterator(runs_dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  for (const auto& f : files) out.push_back(load_run_record(f));
  return out;
}

RunRecord cross_validate(const Dataset& dataset, const Split& split, const RunSpec& spec,
                         const CrossValidateOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord record;
  record.spec = spec;
  record.config_hash = config_hash(spec);
  record.seed = spec.train.seed;

  const int folds = int(kNumFolds);
  if (options.jobs <= 1) {
    for (int f = 0; f < folds; ++f)
      record.folds.push_back(run_fold(dataset, split, spec, f, options));
  } else {
    // Each fold owns its model; results are collected in fold order.
    for (int first = 0; first < folds; first += options.jobs) {
      std::vector<std::future<FoldResult>> wave;
      for (int f = first; f < std::min(folds, first + options.jobs); ++f)
        wave.push_back(std::async(std::launch::async, [&, f] {
          return run_fold(dataset, split, spec, f, options);
        }));
      for (auto& w : wave) record.folds.push_back(w.get());
    }
  }
  record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

std::vector<RunSpec> sweep_trials(const RunSpec& base, const SweepSpec& spec, std::vector<std::string>* warnings) {
  if (spec.budget < 1) throw Error("sweep budget must be >= 1");
  const nlohmann::json space = spec.space.empty() ? default_search_space(base.model) : spec.space;

  std::vector<std::string> keys;
  std::size_t total = 1;
  for (const auto& [key, values] : space.items()) {
    if (!values.is_array() || values.empty()) throw Error("search space entry '" + key + "' must be a non-empty list");
    keys.push_back(key);
    total *= values.size();
  }

  std::size_t budget = std::size_t(spec.budget);
  if (budget > total) {
    if (warnings)
      warnings->push_back("sweep budget " + std::to_string(budget) + " exceeds the " + std::to_string(total) +
                          "-point space; running it exhaustively");
    budget = total;
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<RunSpec> trials;
  for (std::size_t t = 0; t < budget; ++t) {
    RunSpec trial = base;
    nlohmann::json train_overrides = nlohmann::json::object();
    std::size_t index = order[t];
    for (const auto& key : keys) {
      const auto& values = space.at(key);
      const auto& value = values[index % values.size()];
      index /= values.size();
      if (kTrainKeys.count(key)) train_overrides[key] = value;
      else trial.hyperparameters[key] = value;
    }
    trial.train = train_config_from_json(train_overrides, trial.train);
    trials.push_back(std::move(trial));
  }
  return trials;
}

SweepResult sweep(const Dataset& dataset, const Split& split, const RunSpec& base, const SweepSpec& spec, int jobs) {
  SweepResult result;
  CrossValidateOptions options;
  options.evaluate_test = false;
  options.jobs = jobs;
  for (const auto& trial : sweep_trials(base, spec, &result.warnings))
    result.trials.push_back(cross_validate(dataset, split, trial, options));

  double best = -1.0;
  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    const double m = mean_std(result.trials[i].val_aucs()).mean;
    if (m > best) {
      best = m;
      result.best = i;
    }
  }
  return result;
}

nlohmann::json to_json(const SweepResult& result) {
  nlohmann::json trials = nlohmann::json::array();
  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    const auto& t = result.trials[i];
    trials.push_back({{"trial", i},
                      {"config_hash", t.config_hash},
                      {"config", to_json(t.spec)},
                      {"val_aucs", t.val_aucs()},
                      {"mean_val_auc", mean_std(t.val_aucs()).mean}});
  }
  return {{"search", "seeded uniform random search without replacement"},
          {"selection", "max mean validation AUC over folds"},
          {"trials", trials},
          {"best", result.best},
          {"best_config_hash", result.trials.empty() ? "" : result.trials[result.best].config_hash},
          {"warnings", result.warnings}};
}

std::vector<MultiStepPoint> evaluate_multistep_grid(const Model& model, std::span<const ExpandedSequence> sequences,
                                                    std::span<const double> pcts,
                                                    std::span<const MultiStepMode> modes, Feedback feedback,
                                                    const EvalOptions& options) {
  std::vector<MultiStepPoint> out;
  for (auto mode : modes) {
    for (double pct : pcts) {
      MultiStepConfig cfg;
      cfg.observed_pct = pct;
      cfg.mode = mode;
      cfg.feedback = feedback;
      cfg.options = options;
      const auto res = eval_multistep_all(model, sequences, cfg);
      MultiStepPoint p;
      p.observed_pct = pct;
      p.mode = mode;
      p.evaluated = res.evaluated;
      p.skipped = res.skipped;
      try {
        p.metrics = question_level_metrics(res.records, options.threshold);
      } catch (const MetricError&) {
        p.metrics.reset();
      }
      out.push_back(p);
    }
  }
  return out;
}

EvalReport evaluate_run(const Dataset& dataset, const Split& split, const RunRecord& record,
                        const ExperimentConfig& config) {
  EvalReport report;
  report.config_hash = record.config_hash;
  report.model = record.spec.model;
  report.options = config.eval;
  report.cutoff = config.cutoff;
  report.feedback = config.feedback;
  const auto test = expand_students(dataset, ids_of(split.test_ids));
  for (const auto& f : record.folds) {
    if (f.checkpoint.empty()) throw Error("run " + record.config_hash + " has no checkpoint for fold " + std::to_string(f.fold));
    const auto model = load_checkpoint(f.checkpoint);
    FoldEvaluation fe;
    fe.fold = f.fold;
    fe.one_step = summarize_question_level(eval_all_in_one(*model, std::span<const ExpandedSequence>(test), config.eval),
                                           test, config.cutoff, config.eval.threshold);
    fe.multistep = evaluate_multistep_grid(*model, test, config.observed_pcts, config.modes, config.feedback, config.eval);
    report.folds.push_back(std::move(fe));
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json folds = nlohmann::json::array();
  std::vector<double> aucs, accs;
  for (const auto& f : report.folds) {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& p : f.multistep) {
      ms.push_back({{"observed_pct", p.observed_pct},
                    {"mode", to_string(p.mode)},
                    {"metrics", p.metrics ? to_json(*p.metrics) : nlohmann::json(nullptr)},
                    {"evaluated", p.evaluated},
                    {"skipped", p.skipped}});
    }
    folds.push_back({{"fold", f.fold}, {"one_step", to_json(f.one_step)}, {"multistep", ms}});
    aucs.push_back(f.one_step.question.auc);
    accs.push_back(f.one_step.question.accuracy);
  }
  return {{"config_hash", report.config_hash},
          {"model", report.model},
          {"protocol",
           {{"prediction", "all-in-one"},
            {"fusion", to_string(report.options.fusion)},
            {"threshold", report.options.threshold},
            {"length_cutoff", report.cutoff},
            {"accumulative_feedback", to_string(report.feedback)},
            {"long_sequence_context", "recurrent: full history; attention: sliding last m-1 steps"},
            {"significance_test", "two-sided paired t-test"}}},
          {"folds", folds},
          {"summary", {{"auc", format_mean_std(mean_std(aucs))}, {"accuracy", format_mean_std(mean_std(accs))}}}};
}

std::vector<LeakageRow> audit_run(const Dataset& dataset, const Split& split, const RunRecord& record) {
  const auto test = expand_students(dataset, ids_of(split.test_ids));
  std::vector<LeakageRow> rows;
  for (const auto& f : record.folds) {
    if (f.checkpoint.empty()) throw Error("run " + record.config_hash + " has no checkpoint for fold " + std::to_string(f.fold));
    const auto model = load_checkpoint(f.checkpoint);
    rows.push_back({record.config_hash, record.spec.model, f.fold, audit_leakage(*model, std::span<const ExpandedSequence>(test))});
  }
  return rows;
}

std::vector<ReportRow> build_report(const std::vector<RunRecord>& records, double alpha) {
  std::vector<ReportRow> rows;
  std::size_t best = records.size();
  double best_mean = -1.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ReportRow row;
    row.config_hash = r.config_hash;
    row.model = r.spec.model;
    row.folds = r.folds.size();
    row.val_auc = mean_std(r.val_aucs());
    row.test_auc = mean_std(r.test_aucs());
    row.test_accuracy = mean_std(r.test_accuracies());
    if (!r.test_aucs().empty() && row.test_auc.mean > best_mean) {
      best_mean = row.test_auc.mean;
      best = i;
    }
    rows.push_back(row);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (best == records.size() || i == best) {
      rows[i].vs_best = "-";
      continue;
    }
    const auto a = records[best].test_aucs();
    const auto b = records[i].test_aucs();
    rows[i].vs_best = a.size() == b.size() && a.size() >= 2 ? to_string(paired_t_test(a, b, alpha).marker) : "-";
  }
  return rows;
}

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << "config_hash,model,folds,val_auc,test_auc,test_accuracy,best_vs_this\n";
  for (const auto& r : rows) {
    out << r.config_hash << ',' << r.model << ',' << r.folds << ',' << format_mean_std(r.val_auc) << ','
        << format_mean_std(r.test_auc) << ',' << format_mean_std(r.test_accuracy) << ',' << r.vs_best << '\n';
  }
}

}  // namespace ktbench
