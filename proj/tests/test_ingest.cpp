#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "ktbench/ingest.hpp"
#include "support.hpp"

using namespace ktbench;

namespace {

Dataset parse(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return parse_canonical(in, warnings);
}

std::string header() { return std::string(kCanonicalHeader) + "\n"; }

}  // namespace

TEST(Parse, ThreeRowFixture) {
  const auto ds = parse(header() +
                        "s1,q1,k1|k2,1,300\n"
                        "s1,q2,k2,0,100\n"
                        "s1,q1,k1|k2,0,200\n");
  ASSERT_EQ(ds.sequences.size(), 1u);
  const auto& seq = ds.sequences[0].interactions;
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(*seq[0].timestamp, 100);
  EXPECT_EQ(*seq[1].timestamp, 200);
  EXPECT_EQ(*seq[2].timestamp, 300);
  EXPECT_EQ(ds.question_vocab, (std::vector<std::string>{"q1", "q2"}));
  EXPECT_EQ(ds.kc_vocab, (std::vector<std::string>{"k1", "k2"}));
  EXPECT_EQ(ds.question_kcs[0], (std::vector<int>{0, 1}));
}

TEST(Parse, HeaderOnlyGivesEmptyDataset) {
  const auto ds = parse(header());
  EXPECT_TRUE(ds.sequences.empty());
  EXPECT_EQ(ds.num_interactions(), 0u);
}

TEST(Parse, NonNumericResponseCitesLine) {
  try {
    parse(header() + "s1,q1,k1,1,1\ns1,q1,k1,yes,2\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Parse, RejectsWrongHeaderAndFieldCount) {
  EXPECT_THROW(parse("student,question,kcs,response,timestamp\n"), ParseError);
  EXPECT_THROW(parse(header() + "s1,q1,k1,1\n"), ParseError);
  EXPECT_THROW(parse(header() + "s1,q1,k1,1,12x\n"), ParseError);
  EXPECT_THROW(parse(header() + "s1,q1,k1,2,1\n"), ParseError);
}

TEST(Parse, EmptyResponseIsMissingNotError) {
  const auto ds = parse(header() + "s1,q1,,,\n");
  EXPECT_FALSE(ds.sequences[0].interactions[0].response);
  EXPECT_FALSE(ds.sequences[0].interactions[0].timestamp);
  EXPECT_FALSE(ds.has_kc_info());
}

TEST(Parse, InconsistentKcSetsWarn) {
  std::vector<std::string> warnings;
  const auto ds = parse(header() + "s1,q1,k1,1,1\ns1,q1,k2,1,2\n", &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(ds.question_kcs[0].size(), 2u);
}

TEST(Parse, CrlfBomAndQuotedFields) {
  const auto ds = parse("\xEF\xBB\xBF" + std::string(kCanonicalHeader) + "\r\n\"s,1\",\"q \"\"x\"\"\",k1,1,5\r\n");
  EXPECT_EQ(ds.sequences[0].student_id, "s,1");
  EXPECT_EQ(ds.question_vocab[0], "q \"x\"");
}

TEST(RoundTrip, ParseWriteParseIsIdentity) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> odd = {"plain", "with,comma", "with\"quote", "sp ace", "x"};
  for (int trial = 0; trial < 25; ++trial) {
    std::ostringstream text;
    text << header();
    const int students = 1 + int(rng() % 6);
    for (int s = 0; s < students; ++s) {
      const int n = 1 + int(rng() % 8);
      for (int t = 0; t < n; ++t) {
        const int q = int(rng() % 6);
        std::string kcs = "k" + std::to_string(q % 3);
        if (q % 2) kcs += "|k" + std::to_string(3 + q % 2);
        const std::string sid = odd[std::size_t(s) % odd.size()] + std::to_string(s);
        const bool quote = sid.find_first_of(",\"") != std::string::npos;
        std::string field = sid;
        if (quote) {
          field.clear();
          for (char c : sid) field += c == '"' ? std::string("\"\"") : std::string(1, c);
          field = "\"" + field + "\"";
        }
        text << field << ",q" << q << ',' << kcs << ',' << (rng() % 2) << ',' << (rng() % 50) << '\n';
      }
    }
    const auto first = parse(text.str());
    std::ostringstream out;
    write_canonical(first, out);
    const auto second = parse(out.str());
    EXPECT_EQ(first, second);
  }
}

TEST(QuestionId, UnitSeparatorJoin) {
  EXPECT_EQ(compose_question_id("P1", "S2"), std::string("P1\x1FS2"));
  EXPECT_EQ(compose_question_id("P1", "S2"), compose_question_id("P1", "S2"));
  EXPECT_THROW(compose_question_id("", "S2"), Error);
  EXPECT_THROW(compose_question_id("P1", ""), Error);
}

TEST(QuestionId, SeparatorInsideAPartIsEscapedAndRoundTrips) {
  const auto id = compose_question_id("P\x1F" "1", "S2");
  EXPECT_NE(id, compose_question_id("P", "1\x1FS2"));
  const auto [p, s] = split_question_id(id);
  EXPECT_EQ(p, "P\x1F" "1");
  EXPECT_EQ(s, "S2");
}

TEST(QuestionId, InjectiveOnSmallAlphabet) {
  const std::string alphabet = std::string("a\\") + '\x1F';
  std::vector<std::string> words = {"a", "\\", "\x1F"};
  for (char x : alphabet)
    for (char y : alphabet) words.push_back(std::string{x, y});
  std::set<std::string> seen;
  std::size_t pairs = 0;
  for (const auto& p : words)
    for (const auto& s : words) {
      const auto id = compose_question_id(p, s);
      seen.insert(id);
      ++pairs;
      EXPECT_EQ(split_question_id(id), std::make_pair(p, s));
    }
  EXPECT_EQ(seen.size(), pairs);
}
