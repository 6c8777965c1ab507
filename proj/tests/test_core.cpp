#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ktbench/core.hpp"
#include "support.hpp"

using namespace ktbench;
using ktbench::testing::build;

namespace {

Dataset two_students() {
  return build({{"s1", "q1", {"a", "b"}, 1, 10},
                {"s1", "q2", {"a"}, 0, 20},
                {"s2", "q1", {"a", "b"}, 1, 5}});
}

}  // namespace

TEST(Stats, HandCountedFixture) {
  const auto s = compute_stats(two_students());
  EXPECT_EQ(s.interactions, 3u);
  EXPECT_EQ(s.sequences, 2u);
  EXPECT_EQ(s.questions, 2u);
  EXPECT_EQ(s.kcs, 2u);
  ASSERT_TRUE(s.avg_kcs_per_question);
  EXPECT_EQ(*s.avg_kcs_per_question, 1.5);
}

TEST(Stats, EmptyDataset) {
  const auto s = compute_stats(Dataset{});
  EXPECT_EQ(s.interactions, 0u);
  EXPECT_EQ(s.sequences, 0u);
  EXPECT_EQ(s.questions, 0u);
  EXPECT_EQ(s.kcs, 0u);
  EXPECT_FALSE(s.avg_kcs_per_question);
}

TEST(Stats, InvariantUnderSequenceOrder) {
  std::mt19937_64 rng(7);
  std::vector<ktbench::testing::Row> rows;
  for (int s = 0; s < 20; ++s)
    for (int t = 0; t < 5 + s % 4; ++t) {
      const int q = int(rng() % 15);
      rows.push_back({"s" + std::to_string(s), "q" + std::to_string(q),
                      {"k" + std::to_string(q % 4), "k" + std::to_string(q % 3 + 4)}, int(rng() % 2), t});
    }
  auto ds = build(rows);
  const auto before = compute_stats(ds);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(ds.sequences.begin(), ds.sequences.end(), rng);
    EXPECT_EQ(compute_stats(ds), before);
  }
}

TEST(Stats, SingleKcQuestionsAverageExactlyOne) {
  const auto ds = build({{"s1", "q1", {"a"}, 1, 1}, {"s1", "q2", {"b"}, 0, 2}, {"s2", "q3", {"a"}, 1, 1}});
  EXPECT_EQ(*compute_stats(ds).avg_kcs_per_question, 1.0);
}

TEST(Builder, VocabulariesIndependentOfRowOrder) {
  const auto a = build({{"s1", "qb", {"k2"}, 1, 1}, {"s2", "qa", {"k1"}, 0, 1}});
  const auto b = build({{"s2", "qa", {"k1"}, 0, 1}, {"s1", "qb", {"k2"}, 1, 1}});
  EXPECT_EQ(a.question_vocab, b.question_vocab);
  EXPECT_EQ(a.kc_vocab, b.kc_vocab);
  EXPECT_EQ(a.question_vocab, (std::vector<std::string>{"qa", "qb"}));
  // students keep order of first appearance
  EXPECT_EQ(a.sequences[0].student_id, "s1");
  EXPECT_EQ(b.sequences[0].student_id, "s2");
}

TEST(Builder, InconsistentKcSetsTakeUnionWithWarning) {
  std::vector<std::string> warnings;
  const auto ds = build({{"s1", "q1", {"a"}, 1, 1}, {"s1", "q1", {"b"}, 1, 2}}, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(ds.question_kcs[0], (std::vector<int>{0, 1}));
}

TEST(Builder, ChronologicalWithRowTieBreakAndMissingLast) {
  const auto ds = build({{"s1", "q3", {}, 1, std::nullopt},
                         {"s1", "q2", {}, 1, 5},
                         {"s1", "q1", {}, 0, 5},
                         {"s1", "q0", {}, 0, 1}});
  std::vector<std::string> order;
  for (const auto& it : ds.sequences[0].interactions) order.push_back(ds.question_vocab[it.question]);
  EXPECT_EQ(order, (std::vector<std::string>{"q0", "q2", "q1", "q3"}));
}

TEST(Validate, ValidFixtureIsClean) { EXPECT_TRUE(validate(two_students()).empty()); }

TEST(Validate, NonBinaryResponseFlaggedAtItsRow) {
  auto ds = two_students();
  ds.sequences[0].interactions[1].response = 2;
  const auto r = validate(ds);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::ResponseOutOfRange);
  EXPECT_EQ(r.violations[0].row, ds.sequences[0].interactions[1].row);
}

TEST(Validate, KcOutsideQuestionMapIsAMismatch) {
  auto ds = build({{"s1", "q1", {"a"}, 1, 1}, {"s1", "q2", {"b"}, 1, 2}});
  ds.sequences[0].interactions[0].kcs = {0, 1};
  const auto r = validate(ds);
  EXPECT_EQ(r.count(ViolationKind::KcMapMismatch), 1u);
  EXPECT_EQ(r.violations.size(), 1u);
}

TEST(Validate, MissingFieldsAndOrdering) {
  auto ds = build({{"s1", "q1", {"a"}, std::nullopt, 1}, {"s1", "q2", {"a"}, 1, 2}, {"s1", "q2", {"a"}, 1, 3}});
  EXPECT_EQ(validate(ds).count(ViolationKind::MissingField), 1u);
  std::swap(ds.sequences[0].interactions[1], ds.sequences[0].interactions[2]);
  EXPECT_EQ(validate(ds).count(ViolationKind::NotChronological), 1u);
}

TEST(Validate, DuplicateRowsAreKeptAndFlagged) {
  const auto ds = build({{"s1", "q1", {"a"}, 1, 7}, {"s1", "q1", {"a"}, 1, 7}, {"s1", "q2", {"a"}, 1, 8}});
  EXPECT_EQ(ds.sequences[0].interactions.size(), 3u);
  const auto r = validate(ds);
  EXPECT_EQ(r.count(ViolationKind::DuplicateInteraction), 1u);
}
