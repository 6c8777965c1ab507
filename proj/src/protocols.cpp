#include "ktbench/protocols.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

namespace ktbench {

const char* to_string(FusionMechanism f) {
  switch (f) {
    case FusionMechanism::EarlyFusion: return "ef";
    case FusionMechanism::LateAverage: return "lf-avg";
    case FusionMechanism::LateMajorityVote: return "lf-mv";
    case FusionMechanism::LateStrict: return "lf-s";
  }
  return "lf-avg";
}

FusionMechanism parse_fusion(const std::string& name) {
  if (name == "ef") return FusionMechanism::EarlyFusion;
  if (name == "lf-avg") return FusionMechanism::LateAverage;
  if (name == "lf-mv") return FusionMechanism::LateMajorityVote;
  if (name == "lf-s") return FusionMechanism::LateStrict;
  throw Error("unknown fusion mechanism '" + name + "' (expected ef, lf-avg, lf-mv or lf-s)");
}

FusedPrediction fuse_late(std::span<const double> probs, FusionMechanism mechanism, double threshold) {
  if (probs.empty()) throw Error("fuse_late: empty group");
  auto mean_of = [](auto first, auto last, std::size_t n) { return std::accumulate(first, last, 0.0) / double(n); };
  const double avg = mean_of(probs.begin(), probs.end(), probs.size());

  switch (mechanism) {
    case FusionMechanism::LateAverage:
      return {avg, avg >= threshold ? 1 : 0};
    case FusionMechanism::LateStrict: {
      const double lo = *std::min_element(probs.begin(), probs.end());
      return {lo, lo >= threshold ? 1 : 0};
    }
    case FusionMechanism::LateMajorityVote: {
      double pos_sum = 0.0, neg_sum = 0.0;
      std::size_t pos = 0, neg = 0;
      for (double p : probs) {
        if (p >= threshold) {
          pos_sum += p;
          ++pos;
        } else {
          neg_sum += p;
          ++neg;
        }
      }
      if (pos > neg) return {pos_sum / double(pos), 1};
      if (neg > pos) return {neg_sum / double(neg), 0};
      return {avg, avg >= threshold ? 1 : 0};
    }
    case FusionMechanism::EarlyFusion:
      throw CapabilityError("early fusion operates on representations; use fuse_early");
  }
  return {avg, avg >= threshold ? 1 : 0};
}

std::vector<std::pair<std::size_t, std::size_t>> group_ranges(std::span<const ExpandedStep> steps) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  while (begin < steps.size() && !steps[begin].is_pad()) {
    std::size_t end = begin + 1;
    while (end < steps.size() && steps[end].group == steps[begin].group) ++end;
    out.emplace_back(begin, end);
    begin = end;
  }
  return out;
}

MetricResult question_level_metrics(std::span<const PredictionRecord> records, double threshold) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : records) {
    scores.push_back(r.fused_prob);
    labels.push_back(r.label);
  }
  return evaluate_metrics(scores, labels, threshold);
}

MetricResult kc_level_metrics(std::span<const PredictionRecord> records, double threshold) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : records) {
    for (double p : r.kc_probs) {
      scores.push_back(p);
      labels.push_back(r.label);
    }
  }
  return evaluate_metrics(scores, labels, threshold);
}

LengthSplit split_by_length(std::span<const ExpandedSequence> sequences, std::size_t cutoff) {
  if (cutoff < 1) throw Error("split_by_length: cutoff must be >= 1");
  LengthSplit out;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    (sequences[i].num_groups() > cutoff ? out.long_group : out.short_group).push_back(i);
  return out;
}

QuestionLevelResult summarize_question_level(std::vector<PredictionRecord> records,
                                             std::span<const ExpandedSequence> sequences, std::size_t cutoff,
                                             double threshold) {
  QuestionLevelResult r;
  r.question = question_level_metrics(records, threshold);
  r.kc = kc_level_metrics(records, threshold);

  const auto split = split_by_length(sequences, cutoff);
  r.n_long = split.long_group.size();
  r.n_short = split.short_group.size();
  auto subgroup = [&](const std::vector<std::size_t>& members) -> std::optional<MetricResult> {
    if (members.empty()) return std::nullopt;
    std::set<std::string> ids;
    for (auto i : members) ids.insert(sequences[i].student_id);
    std::vector<PredictionRecord> subset;
    for (const auto& rec : records)
      if (ids.count(rec.student_id)) subset.push_back(rec);
    try {
      return question_level_metrics(subset, threshold);
    } catch (const MetricError&) {
      return std::nullopt;
    }
  };
  r.long_group = subgroup(split.long_group);
  r.short_group = subgroup(split.short_group);
  r.records = std::move(records);
  return r;
}

const char* to_string(MultiStepMode m) {
  return m == MultiStepMode::Accumulative ? "accumulative" : "non-accumulative";
}

MultiStepMode parse_mode(const std::string& name) {
  if (name == "accumulative") return MultiStepMode::Accumulative;
  if (name == "non-accumulative") return MultiStepMode::NonAccumulative;
  throw Error("unknown multi-step mode '" + name + "' (expected accumulative or non-accumulative)");
}

const char* to_string(Feedback f) { return f == Feedback::Label ? "label" : "probability"; }

void MultiStepConfig::check() const {
  if (!(observed_pct > 0.0 && observed_pct < 1.0)) throw Error("observed_pct must lie in (0, 1)");
}

std::size_t observed_groups(double observed_pct, std::size_t groups) {
  return std::size_t(std::floor(observed_pct * double(groups) + 1e-9));
}

nlohmann::json to_json(const MetricResult& m) {
  return {{"auc", m.auc}, {"accuracy", m.accuracy}, {"n_pos", m.n_pos}, {"n_neg", m.n_neg}};
}

nlohmann::json to_json(const QuestionLevelResult& r) {
  nlohmann::json j;
  j["question_level"] = to_json(r.question);
  j["kc_level"] = to_json(r.kc);
  j["long"] = r.long_group ? to_json(*r.long_group) : nlohmann::json(nullptr);
  j["short"] = r.short_group ? to_json(*r.short_group) : nlohmann::json(nullptr);
  j["n_long"] = r.n_long;
  j["n_short"] = r.n_short;
  return j;
}

void write_predictions_csv(std::span<const PredictionRecord> records, const Dataset& dataset, std::ostream& out) {
  out << "student_id,position,question_id,fused_prob,label\n";
  out.precision(17);
  for (const auto& r : records) {
    out << r.student_id << ',' << r.source_position << ','
        << (r.question >= 0 ? dataset.question_vocab.at(std::size_t(r.question)) : "") << ',' << r.fused_prob << ','
        << r.label << '\n';
  }
}

}  // namespace ktbench
