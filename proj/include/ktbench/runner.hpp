#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ktbench/core.hpp"
#include "ktbench/metrics.hpp"
#include "ktbench/models/registry.hpp"
#include "ktbench/models/train.hpp"
#include "ktbench/preprocess.hpp"
#include "ktbench/protocols.hpp"

namespace ktbench {

// Everything that determines a trained model: hashed into the run id.
struct RunSpec {
  std::string model = "dkt";
  nlohmann::json hyperparameters = nlohmann::json::object();
  TrainConfig train;
  std::size_t max_length = kDefaultMaxLength;  // m
};

nlohmann::json to_json(const RunSpec& spec);
RunSpec run_spec_from_json(const nlohmann::json& j);

// 64-bit FNV-1a of the canonical (key-sorted, compact) JSON, as 16 hex digits.
std::string config_hash(const RunSpec& spec);
std::string config_hash(const nlohmann::json& canonical);

struct SweepSpec {
  int budget = 10;
  std::uint64_t seed = 42;
  // key -> list of candidate values. learning_rate, dropout, seed and
  // batch_size feed TrainConfig; everything else is a model hyperparameter.
  // Empty: the model's default space.
  nlohmann::json space = nlohmann::json::object();
};

struct ExperimentConfig {
  std::string dataset;
  RunSpec run;
  std::uint64_t split_seed = 42;
  std::string split_file;  // default <output_dir>/split.json
  std::string output_dir = "out";
  EvalOptions eval;
  std::size_t cutoff = kDefaultLengthCutoff;
  std::vector<double> observed_pcts{std::begin(kObservedPcts), std::end(kObservedPcts)};
  std::vector<MultiStepMode> modes{MultiStepMode::Accumulative, MultiStepMode::NonAccumulative};
  Feedback feedback = Feedback::Label;
  SweepSpec sweep;
  int jobs = 1;

  std::filesystem::path split_path() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// The searched hyperparameter space for a model tag (learning rate, dropout,
// seed plus the model's own sizes/weights).
nlohmann::json default_search_space(const std::string& model);
int default_batch_size(const std::string& model);

struct FoldResult {
  int fold = 0;
  double initial_val_auc = 0.0;
  double val_auc = 0.0;  // best validation AUC
  int best_epoch = 0;
  int epochs_run = 0;
  std::optional<QuestionLevelResult> test;  // records are not persisted
  std::string checkpoint;
};

struct RunRecord {
  std::string config_hash;
  RunSpec spec;
  std::vector<FoldResult> folds;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;

  std::vector<double> val_aucs() const;
  std::vector<double> test_aucs() const;
  std::vector<double> test_accuracies() const;
};

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);
void save_run_record(const RunRecord& record, const std::filesystem::path& path);
RunRecord load_run_record(const std::filesystem::path& path);

struct CrossValidateOptions {
  bool evaluate_test = true;  // off for model selection
  std::filesystem::path checkpoint_dir;  // empty: do not persist models
  EvalOptions eval;
  std::size_t cutoff = kDefaultLengthCutoff;
  int jobs = 1;
};

// Fold i validates on split.folds[i] and trains on the other four.
RunRecord cross_validate(const Dataset& dataset, const Split& split, const RunSpec& spec,
                         const CrossValidateOptions& options = {});

struct SweepResult {
  std::vector<RunRecord> trials;
  std::size_t best = 0;
  std::vector<std::string> warnings;
};

// Seeded random search without replacement over the (finite) space. Selects
// by mean validation AUC only; the test students are never touched.
SweepResult sweep(const Dataset& dataset, const Split& split, const RunSpec& base, const SweepSpec& spec,
                  int jobs = 1);

// Enumerates the trial sequence (applied specs) a sweep would run.
std::vector<RunSpec> sweep_trials(const RunSpec& base, const SweepSpec& spec, std::vector<std::string>* warnings = nullptr);

nlohmann::json to_json(const SweepResult& result);

struct MultiStepPoint {
  double observed_pct = 0.0;
  MultiStepMode mode = MultiStepMode::NonAccumulative;
  std::optional<MetricResult> metrics;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct FoldEvaluation {
  int fold = 0;
  QuestionLevelResult one_step;
  std::vector<MultiStepPoint> multistep;
};

struct EvalReport {
  std::string config_hash;
  std::string model;
  EvalOptions options;
  std::size_t cutoff = kDefaultLengthCutoff;
  Feedback feedback = Feedback::Label;
  std::vector<FoldEvaluation> folds;
};

nlohmann::json to_json(const EvalReport& report);

std::vector<MultiStepPoint> evaluate_multistep_grid(const Model& model, std::span<const ExpandedSequence> sequences,
                                                    std::span<const double> pcts,
                                                    std::span<const MultiStepMode> modes, Feedback feedback,
                                                    const EvalOptions& options);

// Evaluates every fold checkpoint of a run on the test students.
EvalReport evaluate_run(const Dataset& dataset, const Split& split, const RunRecord& record,
                        const ExperimentConfig& config);

struct LeakageRow {
  std::string config_hash;
  std::string model;
  int fold = 0;
  LeakageAudit audit;
};

std::vector<LeakageRow> audit_run(const Dataset& dataset, const Split& split, const RunRecord& record);

struct ReportRow {
  std::string config_hash;
  std::string model;
  std::size_t folds = 0;
  MeanStd val_auc, test_auc, test_accuracy;
  std::string vs_best;  // paired t-test marker of the best run against this one
};

std::vector<ReportRow> build_report(const std::vector<RunRecord>& records, double alpha = 0.01);
void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out);

std::vector<RunRecord> load_run_records(const std::filesystem::path& runs_dir);

// Entry point of the ktbench tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace ktbench
