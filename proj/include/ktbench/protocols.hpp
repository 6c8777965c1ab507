#pragma once

#include <cmath>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ktbench/metrics.hpp"
#include "ktbench/models/model.hpp"
#include "ktbench/preprocess.hpp"

namespace ktbench {

enum class FusionMechanism { EarlyFusion, LateAverage, LateMajorityVote, LateStrict };

const char* to_string(FusionMechanism f);
FusionMechanism parse_fusion(const std::string& name);  // ef | lf-avg | lf-mv | lf-s

struct EvalOptions {
  FusionMechanism fusion = FusionMechanism::LateAverage;
  double threshold = kDefaultThreshold;
};

// One question-level prediction: the KC probabilities of one interaction
// group and their fusion.
struct PredictionRecord {
  std::string student_id;
  int source_position = 0;
  int question = -1;
  std::vector<int> kc_items;
  std::vector<double> kc_probs;
  double fused_prob = 0.0;
  int fused_label = 0;
  int label = 0;
};

struct FusedPrediction {
  double prob = 0.0;
  int label = 0;
};

// LF-AVG: mean probability. LF-MV: majority of thresholded labels, reporting
// the mean probability of the winning side (even votes fall back to LF-AVG).
// LF-S: positive iff every KC is positive, reporting the minimum probability.
FusedPrediction fuse_late(std::span<const double> probs, FusionMechanism mechanism,
                          double threshold = kDefaultThreshold);

// EF: the model's output head applied to the mean representation.
template <typename Scalar>
FusedPrediction fuse_early(const SequenceModel<Scalar>& model, std::span<const Vector<Scalar>> reprs,
                           double threshold = kDefaultThreshold) {
  if (!model.has_representation())
    throw CapabilityError("early fusion needs per-item representations; " + model.architecture() +
                          " does not provide them");
  if (reprs.empty()) throw Error("fuse_early: empty group");
  Vector<Scalar> mean = reprs[0];
  for (std::size_t i = 1; i < reprs.size(); ++i) mean += reprs[i];
  mean /= Scalar(reprs.size());
  const double p = double(model.output_from_repr(mean));
  return {p, p >= threshold ? 1 : 0};
}

// [begin, end) step ranges of consecutive equal group ids.
std::vector<std::pair<std::size_t, std::size_t>> group_ranges(std::span<const ExpandedStep> steps);

namespace detail {

template <typename Scalar>
void fill_fusion(const SequenceModel<Scalar>& model, PredictionRecord& rec,
                 std::span<const Vector<Scalar>> reprs, const EvalOptions& options) {
  const auto fused = options.fusion == FusionMechanism::EarlyFusion
                         ? fuse_early<Scalar>(model, reprs, options.threshold)
                         : fuse_late(rec.kc_probs, options.fusion, options.threshold);
  rec.fused_prob = fused.prob;
  rec.fused_label = fused.label;
}

// Queries every KC of steps[begin, end) against one state and fuses them.
template <typename Scalar>
PredictionRecord predict_group(const SequenceModel<Scalar>& model, const ModelState<Scalar>& state,
                               const ExpandedSequence& seq, std::size_t begin, std::size_t end,
                               const EvalOptions& options) {
  PredictionRecord rec;
  rec.student_id = seq.student_id;
  rec.source_position = seq.steps[begin].source_position;
  rec.question = seq.questions.at(std::size_t(rec.source_position));
  rec.label = seq.steps[begin].response;
  std::vector<Vector<Scalar>> reprs;
  for (std::size_t i = begin; i < end; ++i) {
    const int item = seq.steps[i].item;
    rec.kc_items.push_back(item);
    if (options.fusion == FusionMechanism::EarlyFusion) {
      reprs.push_back(model.query_repr(state, item));
      rec.kc_probs.push_back(double(model.output_from_repr(reprs.back())));
    } else {
      rec.kc_probs.push_back(double(model.query(state, item)));
    }
  }
  fill_fusion<Scalar>(model, rec, reprs, options);
  return rec;
}

}  // namespace detail

// Leakage-free evaluation: every KC of a question is predicted from the state
// before the question; the state then absorbs the group's ground truth.
template <typename Scalar>
std::vector<PredictionRecord> eval_all_in_one(const SequenceModel<Scalar>& model,
                                              std::span<const ExpandedSequence> sequences,
                                              const EvalOptions& options = {}) {
  std::vector<PredictionRecord> out;
  for (const auto& seq : sequences) {
    auto state = model.init_state();
    for (const auto& [begin, end] : group_ranges(seq.steps)) {
      out.push_back(detail::predict_group(model, state, seq, begin, end, options));
      state = advance_through(model, std::move(state),
                              std::span<const ExpandedStep>(seq.steps).subspan(begin, end - begin));
    }
  }
  return out;
}

// Teacher-forced next-step prediction over the expanded sequence. Later KCs of
// a question see the ground truth of earlier ones (label leakage); kept for
// auditing.
template <typename Scalar>
std::vector<PredictionRecord> eval_one_by_one(const SequenceModel<Scalar>& model,
                                              std::span<const ExpandedSequence> sequences,
                                              const EvalOptions& options = {}) {
  std::vector<PredictionRecord> out;
  for (const auto& seq : sequences) {
    auto state = model.init_state();
    for (const auto& [begin, end] : group_ranges(seq.steps)) {
      PredictionRecord rec;
      rec.student_id = seq.student_id;
      rec.source_position = seq.steps[begin].source_position;
      rec.question = seq.questions.at(std::size_t(rec.source_position));
      rec.label = seq.steps[begin].response;
      std::vector<Vector<Scalar>> reprs;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& step = seq.steps[i];
        rec.kc_items.push_back(step.item);
        if (options.fusion == FusionMechanism::EarlyFusion) {
          reprs.push_back(model.query_repr(state, step.item));
          rec.kc_probs.push_back(double(model.output_from_repr(reprs.back())));
        } else {
          rec.kc_probs.push_back(double(model.query(state, step.item)));
        }
        state = model.advance(std::move(state), step.item, Scalar(step.response));
      }
      detail::fill_fusion<Scalar>(model, rec, reprs, options);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

// Metrics over fused question-level predictions.
MetricResult question_level_metrics(std::span<const PredictionRecord> records,
                                    double threshold = kDefaultThreshold);
// Metrics over every KC prediction, each labelled with its question's response.
MetricResult kc_level_metrics(std::span<const PredictionRecord> records, double threshold = kDefaultThreshold);

// L: sequences with more than `cutoff` interactions; S: the rest.
struct LengthSplit {
  std::vector<std::size_t> long_group;
  std::vector<std::size_t> short_group;
};

inline constexpr std::size_t kDefaultLengthCutoff = 200;

LengthSplit split_by_length(std::span<const ExpandedSequence> sequences, std::size_t cutoff = kDefaultLengthCutoff);

struct QuestionLevelResult {
  MetricResult question;
  MetricResult kc;
  std::optional<MetricResult> long_group;  // absent when empty or single-class
  std::optional<MetricResult> short_group;
  std::size_t n_long = 0;
  std::size_t n_short = 0;
  std::vector<PredictionRecord> records;
};

QuestionLevelResult summarize_question_level(std::vector<PredictionRecord> records,
                                             std::span<const ExpandedSequence> sequences, std::size_t cutoff,
                                             double threshold);

// All-in-one predictions on the split's test students, fused per question.
template <typename Scalar>
QuestionLevelResult eval_question_level(const SequenceModel<Scalar>& model, const Dataset& dataset,
                                        const Split& split, const EvalOptions& options = {},
                                        std::size_t cutoff = kDefaultLengthCutoff) {
  const std::set<std::string> ids(split.test_ids.begin(), split.test_ids.end());
  const auto sequences = expand_students(dataset, ids);
  auto records = eval_all_in_one(model, std::span<const ExpandedSequence>(sequences), options);
  return summarize_question_level(std::move(records), sequences, cutoff, options.threshold);
}

enum class MultiStepMode { Accumulative, NonAccumulative };
// What accumulative prediction feeds back: the thresholded fused label or the
// fused probability itself.
enum class Feedback { Label, Probability };

const char* to_string(MultiStepMode m);
MultiStepMode parse_mode(const std::string& name);  // accumulative | non-accumulative
const char* to_string(Feedback f);

struct MultiStepConfig {
  double observed_pct = 0.5;
  MultiStepMode mode = MultiStepMode::NonAccumulative;
  Feedback feedback = Feedback::Label;
  EvalOptions options;

  void check() const;
};

inline constexpr double kObservedPcts[] = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

// floor(pct * groups), guarded against representation error in pct
std::size_t observed_groups(double observed_pct, std::size_t groups);

// Predicts every group after the observed prefix. Non-accumulative queries
// all of them from the frozen prefix state; accumulative advances through
// each predicted group feeding back its own prediction.
template <typename Scalar>
std::vector<PredictionRecord> eval_multistep(const SequenceModel<Scalar>& model, const ExpandedSequence& seq,
                                             const MultiStepConfig& config) {
  config.check();
  const auto ranges = group_ranges(seq.steps);
  const std::size_t prefix = observed_groups(config.observed_pct, ranges.size());
  if (prefix == 0) throw Error("eval_multistep: observed prefix is empty for student '" + seq.student_id + "'");
  if (prefix >= ranges.size())
    throw Error("eval_multistep: nothing left to predict for student '" + seq.student_id + "'");

  const std::span<const ExpandedStep> steps(seq.steps);
  auto state = advance_through(model, model.init_state(), steps.subspan(0, ranges[prefix].first));
  std::vector<PredictionRecord> out;
  for (std::size_t g = prefix; g < ranges.size(); ++g) {
    const auto [begin, end] = ranges[g];
    auto rec = detail::predict_group(model, state, seq, begin, end, config.options);
    if (config.mode == MultiStepMode::Accumulative) {
      const Scalar fed = config.feedback == Feedback::Label ? Scalar(rec.fused_prob >= config.options.threshold ? 1 : 0)
                                                            : Scalar(rec.fused_prob);
      for (std::size_t i = begin; i < end; ++i) state = model.advance(std::move(state), steps[i].item, fed);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

struct MultiStepResult {
  std::vector<PredictionRecord> records;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // sequences too short for this observed_pct
};

template <typename Scalar>
MultiStepResult eval_multistep_all(const SequenceModel<Scalar>& model, std::span<const ExpandedSequence> sequences,
                                   const MultiStepConfig& config) {
  MultiStepResult result;
  for (const auto& seq : sequences) {
    const std::size_t groups = group_ranges(seq.steps).size();
    const std::size_t prefix = observed_groups(config.observed_pct, groups);
    if (prefix == 0 || prefix >= groups) {
      ++result.skipped;
      continue;
    }
    auto recs = eval_multistep(model, seq, config);
    result.records.insert(result.records.end(), std::make_move_iterator(recs.begin()),
                          std::make_move_iterator(recs.end()));
    ++result.evaluated;
  }
  return result;
}

// KC-level AUC inflation from sibling leakage: one-by-one minus all-in-one.
struct LeakageAudit {
  MetricResult all_in_one;
  MetricResult one_by_one;
  double delta_auc = 0.0;
  double delta_accuracy = 0.0;
};

template <typename Scalar>
LeakageAudit audit_leakage(const SequenceModel<Scalar>& model, std::span<const ExpandedSequence> sequences) {
  LeakageAudit a;
  a.all_in_one = kc_level_metrics(eval_all_in_one(model, sequences));
  a.one_by_one = kc_level_metrics(eval_one_by_one(model, sequences));
  a.delta_auc = a.one_by_one.auc - a.all_in_one.auc;
  a.delta_accuracy = a.one_by_one.accuracy - a.all_in_one.accuracy;
  return a;
}

nlohmann::json to_json(const MetricResult& m);
nlohmann::json to_json(const QuestionLevelResult& r);

// student_id,position,question_id,fused_prob,label
void write_predictions_csv(std::span<const PredictionRecord> records, const Dataset& dataset, std::ostream& out);

}  // namespace ktbench
