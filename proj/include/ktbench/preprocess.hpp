#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ktbench/core.hpp"

namespace ktbench {

inline constexpr int kPad = -1;
inline constexpr std::size_t kNumFolds = 5;
inline constexpr std::size_t kMinInteractions = 3;
inline constexpr std::size_t kDefaultMaxLength = 200;

// A KC-level step. All steps expanded from one interaction share group and
// response. Pad slots hold kPad in every field.
struct ExpandedStep {
  int item = kPad;
  int group = kPad;
  int response = kPad;
  int source_position = kPad;

  bool is_pad() const { return item == kPad; }
  bool operator==(const ExpandedStep&) const = default;
};

struct ExpandedSequence {
  std::string student_id;
  std::vector<ExpandedStep> steps;
  std::vector<int> questions;  // question index per source position (= per group)

  std::size_t num_groups() const { return questions.size(); }
};

struct Window {
  std::vector<ExpandedStep> steps;  // always the configured length
  std::size_t valid_len = 0;
};

struct Split {
  std::uint64_t seed = 0;
  std::vector<std::string> test_ids;
  std::array<std::vector<std::string>, kNumFolds> folds;

  bool operator==(const Split&) const = default;
};

// Drops interactions with a missing field (or no KC in a KC-bearing dataset),
// then students left with fewer than kMinInteractions; vocabularies are rebuilt.
Dataset filter(const Dataset& dataset);

// 20% of students (rounded to nearest) form the test set; the rest are dealt
// round-robin into kNumFolds folds after a seeded shuffle.
Split split_students(const Dataset& dataset, std::uint64_t seed);

std::size_t test_set_size(std::size_t num_students);

nlohmann::json to_json(const Split& split);
Split split_from_json(const nlohmann::json& j);
void save_split(const Split& split, const std::filesystem::path& path);
Split load_split(const std::filesystem::path& path);

// Number of distinct model items: KCs, or questions when KC info is absent.
int num_items(const Dataset& dataset);

std::vector<ExpandedStep> expand_to_kc(const StudentSequence& sequence,
                                       std::span<const std::vector<int>> question_kcs,
                                       bool kc_info);
ExpandedSequence expand_sequence(const Dataset& dataset, const StudentSequence& sequence);
std::vector<ExpandedSequence> expand_students(const Dataset& dataset,
                                              const std::set<std::string>& student_ids);

std::vector<Window> window(std::span<const ExpandedStep> steps, std::size_t length);
std::vector<Window> window_all(std::span<const ExpandedSequence> sequences, std::size_t length);

}  // namespace ktbench
