#include "ktbench/preprocess.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace ktbench {

Dataset filter(const Dataset& dataset) {
  DatasetBuilder builder;
  const bool kc_info = dataset.has_kc_info();
  for (const auto& seq : dataset.sequences) {
    if (seq.student_id.empty()) continue;
    std::vector<const Interaction*> kept;
    for (const auto& it : seq.interactions) {
      if (it.question < 0 || !it.response || !it.timestamp) continue;
      if (kc_info && it.kcs.empty()) continue;
      kept.push_back(&it);
    }
    if (kept.size() < kMinInteractions) continue;
    for (const auto* it : kept) {
      std::vector<std::string> kcs;
      for (int k : it->kcs) kcs.push_back(dataset.kc_vocab[k]);
      builder.add(seq.student_id, dataset.question_vocab[it->question], kcs, it->response,
                  it->timestamp, it->row);
    }
  }
  return builder.build();
}

std::size_t test_set_size(std::size_t num_students) {
  // round(0.2 N), ties up
  return (2 * num_students + 5) / 10;
}

Split split_students(const Dataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.sequences.size();
  if (n < kNumFolds + 1)
    throw Error("split_students: need at least " + std::to_string(kNumFolds + 1) +
                " students, have " + std::to_string(n));

  std::vector<std::string> ids;
  for (const auto& seq : dataset.sequences) ids.push_back(seq.student_id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  Split split;
  split.seed = seed;
  const std::size_t n_test = test_set_size(n);
  split.test_ids.assign(ids.begin(), ids.begin() + std::ptrdiff_t(n_test));
  for (std::size_t i = n_test; i < n; ++i) split.folds[(i - n_test) % kNumFolds].push_back(ids[i]);
  return split;
}

nlohmann::json to_json(const Split& split) {
  nlohmann::json j;
  j["seed"] = split.seed;
  j["test_ids"] = split.test_ids;
  j["folds"] = nlohmann::json::array();
  for (const auto& fold : split.folds) j["folds"].push_back(fold);
  return j;
}

Split split_from_json(const nlohmann::json& j) {
  Split split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  const auto& folds = j.at("folds");
  if (folds.size() != kNumFolds) throw Error("split file must contain 5 folds");
  for (std::size_t i = 0; i < kNumFolds; ++i)
    split.folds[i] = folds[i].get<std::vector<std::string>>();
  return split;
}

void save_split(const Split& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(split).dump(2) << '\n';
}

Split load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing split file " + path.string());
  return split_from_json(nlohmann::json::parse(in));
}

int num_items(const Dataset& dataset) {
  return int(dataset.has_kc_info() ? dataset.kc_vocab.size() : dataset.question_vocab.size());
}

std::vector<ExpandedStep> expand_to_kc(const StudentSequence& sequence,
                                       std::span<const std::vector<int>> question_kcs,
                                       bool kc_info) {
  std::vector<ExpandedStep> steps;
  steps.reserve(sequence.interactions.size());
  for (std::size_t pos = 0; pos < sequence.interactions.size(); ++pos) {
    const auto& it = sequence.interactions[pos];
    if (it.question < 0 || !it.response)
      throw Error("expand_to_kc: student '" + sequence.student_id + "' position " +
                  std::to_string(pos) + " is missing a field; filter first");
    const int group = int(pos);
    if (!kc_info) {
      steps.push_back({it.question, group, *it.response, int(pos)});
      continue;
    }
    const auto& kcs = question_kcs[std::size_t(it.question)];
    if (kcs.empty())
      throw Error("expand_to_kc: question index " + std::to_string(it.question) +
                  " has no KC in a KC-bearing dataset");
    for (int k : kcs) steps.push_back({k, group, *it.response, int(pos)});
  }
  return steps;
}

ExpandedSequence expand_sequence(const Dataset& dataset, const StudentSequence& sequence) {
  ExpandedSequence out;
  out.student_id = sequence.student_id;
  out.steps = expand_to_kc(sequence, dataset.question_kcs, dataset.has_kc_info());
  for (const auto& it : sequence.interactions) out.questions.push_back(it.question);
  return out;
}

std::vector<ExpandedSequence> expand_students(const Dataset& dataset,
                                              const std::set<std::string>& student_ids) {
  std::vector<ExpandedSequence> out;
  for (const auto& seq : dataset.sequences)
    if (student_ids.count(seq.student_id)) out.push_back(expand_sequence(dataset, seq));
  return out;
}

std::vector<Window> window(std::span<const ExpandedStep> steps, std::size_t length) {
  if (length < 2) throw Error("window length must be at least 2");
  std::vector<Window> out;
  for (std::size_t start = 0; start < steps.size(); start += length) {
    Window w;
    w.valid_len = std::min(length, steps.size() - start);
    w.steps.assign(steps.begin() + std::ptrdiff_t(start),
                   steps.begin() + std::ptrdiff_t(start + w.valid_len));
    w.steps.resize(length);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Window> window_all(std::span<const ExpandedSequence> sequences, std::size_t length) {
  std::vector<Window> out;
  for (const auto& seq : sequences) {
    auto ws = window(seq.steps, length);
    out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return out;
}

}  // namespace ktbench
