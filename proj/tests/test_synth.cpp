#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ktbench/ingest.hpp"
#include "ktbench/metrics.hpp"
#include "ktbench/synth.hpp"

using namespace ktbench;

namespace {

SimConfig small() {
  SimConfig c;
  c.n_students = 50;
  c.n_questions = 40;
  c.n_kcs = 8;
  c.min_kcs_per_question = 1;
  c.max_kcs_per_question = 3;
  c.min_steps = 10;
  c.max_steps = 20;
  return c;
}

std::string csv_bytes(const Dataset& ds) {
  std::ostringstream out;
  write_canonical(ds, out);
  return out.str();
}

}  // namespace

TEST(Simulate, SameSeedSameBytes) {
  EXPECT_EQ(csv_bytes(generate(small())), csv_bytes(generate(small())));
  auto other = small();
  other.seed = 43;
  EXPECT_NE(csv_bytes(generate(small())), csv_bytes(generate(other)));
}

TEST(Simulate, GeneratedDataIsValid) {
  const auto sim = simulate(small());
  EXPECT_TRUE(validate(sim.dataset).empty());
  ASSERT_EQ(sim.probabilities.size(), sim.dataset.sequences.size());
  for (std::size_t s = 0; s < sim.probabilities.size(); ++s) {
    ASSERT_EQ(sim.probabilities[s].size(), sim.dataset.sequences[s].interactions.size());
    const auto& seq = sim.dataset.sequences[s].interactions;
    for (std::size_t t = 1; t < seq.size(); ++t) EXPECT_LT(*seq[t - 1].timestamp, *seq[t].timestamp);
  }
}

TEST(Simulate, SaturatedAbilityAnswersEverythingCorrectly) {
  auto c = small();
  c.gain = 0.0;
  c.initial_ability_mean = 1e6;
  const auto ds = generate(c);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& seq : ds.sequences)
    for (const auto& it : seq.interactions) {
      EXPECT_EQ(*it.response, 1);
      scores.push_back(0.5);
      labels.push_back(*it.response);
    }
  EXPECT_THROW(auc(scores, labels), MetricError);
}

TEST(Simulate, PositiveGainImprovesCorrectnessOverTime) {
  auto c = small();
  c.n_students = 400;
  c.min_steps = 40;
  c.max_steps = 60;
  c.gain = 0.1;
  const auto sim = simulate(c);
  double first = 0.0, second = 0.0;
  for (const auto& seq : sim.dataset.sequences) {
    const auto& its = seq.interactions;
    const std::size_t half = its.size() / 2;
    double a = 0, b = 0;
    for (std::size_t t = 0; t < half; ++t) a += *its[t].response;
    for (std::size_t t = half; t < 2 * half; ++t) b += *its[t].response;
    first += a / double(half);
    second += b / double(half);
  }
  EXPECT_GE(second, first);
}

TEST(Simulate, KcCountDistributionMean) {
  SimConfig c;
  c.n_questions = 20000;
  c.n_kcs = 30;
  c.min_kcs_per_question = 1;
  c.max_kcs_per_question = 3;
  c.n_students = 10;
  c.min_steps = c.max_steps = 4000;
  // only visited questions enter the dataset
  const auto ds = generate(c);
  ASSERT_GE(ds.question_kcs.size(), 10000u);
  double links = 0;
  for (const auto& kcs : ds.question_kcs) links += double(kcs.size());
  const double avg = links / double(ds.question_kcs.size());
  EXPECT_NEAR(avg, c.mean_kcs_per_question(), 0.02 * c.mean_kcs_per_question());
}

TEST(Oracle, RegeneratesExactlyAndRejectsForeignData) {
  const auto c = small();
  const auto sim = simulate(c);
  EXPECT_EQ(oracle_probabilities(c, sim.dataset), sim.probabilities);
  auto other = c;
  other.seed = 7;
  EXPECT_THROW(oracle_probabilities(other, sim.dataset), Error);
}

TEST(Oracle, DegenerateConfig) {
  SimConfig c;
  c.n_students = 1;
  c.n_questions = 1;
  c.n_kcs = 1;
  c.min_steps = c.max_steps = 1;
  const auto p = oracle_probabilities(c, generate(c));
  ASSERT_EQ(p.size(), 1u);
  ASSERT_EQ(p[0].size(), 1u);
}

TEST(Config, JsonRoundTripAndChecks) {
  const auto c = small();
  EXPECT_EQ(sim_config_from_json(to_json(c)), c);
  auto bad = c;
  bad.gain = -1;
  EXPECT_THROW(bad.check(), Error);
  bad = c;
  bad.max_kcs_per_question = 99;
  EXPECT_THROW(bad.check(), Error);
}

TEST(Sidecar, WrittenNextToCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "ktbench_synth_test";
  std::filesystem::create_directories(dir);
  const auto c = small();
  write_simulation(c, simulate(c), dir / "d.csv");
  EXPECT_EQ(parse_canonical(dir / "d.csv"), generate(c));
  std::ifstream side(dir / "d.csv.sim.json");
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(sim_config_from_json(j.at("config")), c);
  std::filesystem::remove_all(dir);
}
