#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ktbench {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One logged event: (question, KC set, response, timestamp). Missing fields are
// representable so that raw logs survive ingest and are dropped by filtering.
struct Interaction {
  int question = -1;  // dense question index, -1 when absent
  std::vector<int> kcs;  // dense KC indices, in source order
  std::optional<int> response;
  std::optional<std::int64_t> timestamp;
  std::size_t row = 0;  // provenance (source data line); not part of the value

  bool operator==(const Interaction& other) const {
    return question == other.question && kcs == other.kcs && response == other.response &&
           timestamp == other.timestamp;
  }
};

struct StudentSequence {
  std::string student_id;
  std::vector<Interaction> interactions;

  bool operator==(const StudentSequence&) const = default;
};

// Immutable once built. Vocabularies are sorted by identifier so the dense
// indices do not depend on row order.
struct Dataset {
  std::vector<StudentSequence> sequences;
  std::vector<std::vector<int>> question_kcs;  // question index -> sorted KC indices
  std::vector<std::string> question_vocab;
  std::vector<std::string> kc_vocab;

  bool has_kc_info() const { return !kc_vocab.empty(); }
  std::size_t num_interactions() const;

  bool operator==(const Dataset&) const = default;
};

// Accumulates string-keyed rows and assigns dense indices on build().
class DatasetBuilder {
 public:
  void add(const std::string& student_id, const std::string& question_id,
           const std::vector<std::string>& kc_ids, std::optional<int> response,
           std::optional<std::int64_t> timestamp, std::size_t row);

  Dataset build();

  // Questions whose rows disagreed on the KC set (union was taken).
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Row {
    std::string question;
    std::vector<std::string> kcs;
    std::optional<int> response;
    std::optional<std::int64_t> timestamp;
    std::size_t row;
  };
  std::vector<std::string> student_order_;
  std::map<std::string, std::vector<Row>> rows_;
  std::map<std::string, std::vector<std::string>> question_kcs_;
  std::vector<std::string> warnings_;
};

// Chronological order with ties (and missing timestamps, placed last) broken by row.
void sort_chronologically(std::vector<Interaction>& interactions);

struct DatasetStats {
  std::size_t interactions = 0;
  std::size_t sequences = 0;
  std::size_t questions = 0;
  std::size_t kcs = 0;
  // avg KCs per question as the exact ratio kc_links / questions_with_kcs
  std::size_t kc_links = 0;
  std::size_t questions_with_kcs = 0;
  std::optional<double> avg_kcs_per_question;

  bool operator==(const DatasetStats&) const = default;
};

DatasetStats compute_stats(const Dataset& dataset);

enum class ViolationKind {
  MissingField,
  ResponseOutOfRange,
  DuplicateKc,
  UnknownQuestion,
  UnknownKc,
  KcMapMismatch,
  NotChronological,
  DuplicateInteraction,
};

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::size_t sequence = 0;
  std::size_t position = 0;
  std::size_t row = 0;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool empty() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

ValidationReport validate(const Dataset& dataset);

}  // namespace ktbench
