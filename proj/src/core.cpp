#include "ktbench/core.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_map>

namespace ktbench {

std::size_t Dataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& seq : sequences) n += seq.interactions.size();
  return n;
}

void DatasetBuilder::add(const std::string& student_id, const std::string& question_id,
                         const std::vector<std::string>& kc_ids, std::optional<int> response,
                         std::optional<std::int64_t> timestamp, std::size_t row) {
  auto [it, inserted] = rows_.try_emplace(student_id);
  if (inserted) student_order_.push_back(student_id);
  it->second.push_back(Row{question_id, kc_ids, response, timestamp, row});

  if (question_id.empty() || kc_ids.empty()) return;
  std::vector<std::string> sorted(kc_ids);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  auto [qit, fresh] = question_kcs_.try_emplace(question_id, sorted);
  if (fresh || qit->second == sorted) return;
  warnings_.push_back("question '" + question_id + "' has inconsistent KC sets (row " +
                      std::to_string(row) + "); using the union");
  std::vector<std::string> merged;
  std::set_union(qit->second.begin(), qit->second.end(), sorted.begin(), sorted.end(),
                 std::back_inserter(merged));
  qit->second = std::move(merged);
}

Dataset DatasetBuilder::build() {
  std::set<std::string> questions, kcs;
  for (const auto& [student, rows] : rows_) {
    for (const auto& r : rows) {
      if (!r.question.empty()) questions.insert(r.question);
      kcs.insert(r.kcs.begin(), r.kcs.end());
    }
  }

  Dataset ds;
  ds.question_vocab.assign(questions.begin(), questions.end());
  ds.kc_vocab.assign(kcs.begin(), kcs.end());
  std::unordered_map<std::string, int> qindex, kindex;
  for (std::size_t i = 0; i < ds.question_vocab.size(); ++i) qindex[ds.question_vocab[i]] = int(i);
  for (std::size_t i = 0; i < ds.kc_vocab.size(); ++i) kindex[ds.kc_vocab[i]] = int(i);

  ds.question_kcs.resize(ds.question_vocab.size());
  for (const auto& [question, kc_ids] : question_kcs_) {
    auto& dst = ds.question_kcs[qindex.at(question)];
    for (const auto& k : kc_ids) dst.push_back(kindex.at(k));
    std::sort(dst.begin(), dst.end());
  }

  for (const auto& student : student_order_) {
    StudentSequence seq;
    seq.student_id = student;
    for (const auto& r : rows_.at(student)) {
      Interaction it;
      it.question = r.question.empty() ? -1 : qindex.at(r.question);
      for (const auto& k : r.kcs) it.kcs.push_back(kindex.at(k));
      it.response = r.response;
      it.timestamp = r.timestamp;
      it.row = r.row;
      seq.interactions.push_back(std::move(it));
    }
    sort_chronologically(seq.interactions);
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

void sort_chronologically(std::vector<Interaction>& interactions) {
  auto key = [](const Interaction& it) {
    return std::make_tuple(!it.timestamp.has_value(), it.timestamp.value_or(0), it.row);
  };
  std::stable_sort(interactions.begin(), interactions.end(),
                   [&](const Interaction& a, const Interaction& b) { return key(a) < key(b); });
}

DatasetStats compute_stats(const Dataset& dataset) {
  DatasetStats stats;
  std::set<int> questions, kcs;
  for (const auto& seq : dataset.sequences) {
    for (const auto& it : seq.interactions) {
      ++stats.interactions;
      if (it.question >= 0) questions.insert(it.question);
      kcs.insert(it.kcs.begin(), it.kcs.end());
    }
  }
  stats.sequences = dataset.sequences.size();
  stats.questions = questions.size();
  stats.kcs = kcs.size();
  for (int q : questions) {
    if (std::size_t(q) >= dataset.question_kcs.size()) continue;
    const auto n = dataset.question_kcs[q].size();
    if (n == 0) continue;
    stats.kc_links += n;
    ++stats.questions_with_kcs;
  }
  if (stats.questions_with_kcs > 0)
    stats.avg_kcs_per_question = double(stats.kc_links) / double(stats.questions_with_kcs);
  return stats;
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::MissingField: return "missing_field";
    case ViolationKind::ResponseOutOfRange: return "response_out_of_range";
    case ViolationKind::DuplicateKc: return "duplicate_kc";
    case ViolationKind::UnknownQuestion: return "unknown_question";
    case ViolationKind::UnknownKc: return "unknown_kc";
    case ViolationKind::KcMapMismatch: return "kc_map_mismatch";
    case ViolationKind::NotChronological: return "not_chronological";
    case ViolationKind::DuplicateInteraction: return "duplicate_interaction";
  }
  return "unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return std::size_t(std::count_if(violations.begin(), violations.end(),
                                   [&](const Violation& v) { return v.kind == kind; }));
}

ValidationReport validate(const Dataset& dataset) {
  ValidationReport report;
  const int nq = int(dataset.question_vocab.size());
  const int nk = int(dataset.kc_vocab.size());

  for (std::size_t s = 0; s < dataset.sequences.size(); ++s) {
    const auto& seq = dataset.sequences[s];
    auto flag = [&](ViolationKind kind, std::size_t pos, std::string msg) {
      report.violations.push_back(
          Violation{kind, s, pos, seq.interactions[pos].row,
                    "student '" + seq.student_id + "' position " + std::to_string(pos) + ": " +
                        std::move(msg)});
    };

    for (std::size_t p = 0; p < seq.interactions.size(); ++p) {
      const auto& it = seq.interactions[p];

      if (it.question < 0 || !it.response || !it.timestamp ||
          (dataset.has_kc_info() && it.kcs.empty()))
        flag(ViolationKind::MissingField, p, "interaction is missing a field");

      if (it.response && *it.response != 0 && *it.response != 1)
        flag(ViolationKind::ResponseOutOfRange, p,
             "response " + std::to_string(*it.response) + " is not binary");

      std::vector<int> sorted(it.kcs);
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        flag(ViolationKind::DuplicateKc, p, "KC listed twice");

      bool kcs_known = true;
      for (int k : it.kcs) {
        if (k < 0 || k >= nk) {
          flag(ViolationKind::UnknownKc, p, "KC index " + std::to_string(k) + " not in vocabulary");
          kcs_known = false;
        }
      }

      if (it.question >= nq) {
        flag(ViolationKind::UnknownQuestion, p,
             "question index " + std::to_string(it.question) + " not in vocabulary");
      } else if (it.question >= 0 && kcs_known) {
        const auto& mapped = std::size_t(it.question) < dataset.question_kcs.size()
                                 ? dataset.question_kcs[it.question]
                                 : std::vector<int>{};
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        if (!std::includes(mapped.begin(), mapped.end(), sorted.begin(), sorted.end()))
          flag(ViolationKind::KcMapMismatch, p, "KC set is not contained in the question's KC map");
      }

      if (p > 0) {
        const auto& prev = seq.interactions[p - 1];
        if (prev.timestamp && it.timestamp &&
            (*prev.timestamp > *it.timestamp ||
             (*prev.timestamp == *it.timestamp && prev.row > it.row)))
          flag(ViolationKind::NotChronological, p, "interactions out of chronological order");
        for (std::size_t q = p; q-- > 0;) {
          const auto& other = seq.interactions[q];
          if (!other.timestamp || !it.timestamp || *other.timestamp != *it.timestamp) break;
          if (other == it) {
            flag(ViolationKind::DuplicateInteraction, p,
                 "duplicate of position " + std::to_string(q));
            break;
          }
        }
      }
    }
  }
  return report;
}

}  // namespace ktbench
