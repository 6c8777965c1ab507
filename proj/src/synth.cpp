#include "ktbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "ktbench/ingest.hpp"

namespace ktbench {

namespace {

std::string padded_id(char prefix, int value, int count) {
  const int width = int(std::to_string(std::max(count - 1, 0)).size());
  std::string digits = std::to_string(value);
  return std::string(1, prefix) + std::string(std::size_t(width) - digits.size(), '0') + digits;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr std::int64_t kEpochMs = 1'600'000'000'000;
constexpr std::int64_t kStepMs = 60'000;

}  // namespace

void SimConfig::check() const {
  if (n_students < 1 || n_questions < 1 || n_kcs < 1)
    throw Error("SimConfig: counts must be >= 1");
  if (min_kcs_per_question < 1 || max_kcs_per_question < min_kcs_per_question ||
      max_kcs_per_question > n_kcs)
    throw Error("SimConfig: need 1 <= min_kcs_per_question <= max_kcs_per_question <= n_kcs");
  if (min_steps < 1 || max_steps < min_steps) throw Error("SimConfig: need 1 <= min_steps <= max_steps");
  if (gain < 0) throw Error("SimConfig: gain must be >= 0");
  if (initial_ability_scale < 0 || kc_ability_spread < 0 || kc_difficulty_scale < 0)
    throw Error("SimConfig: scales must be >= 0");
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n_students", c.n_students},
          {"n_questions", c.n_questions},
          {"n_kcs", c.n_kcs},
          {"min_kcs_per_question", c.min_kcs_per_question},
          {"max_kcs_per_question", c.max_kcs_per_question},
          {"min_steps", c.min_steps},
          {"max_steps", c.max_steps},
          {"initial_ability_mean", c.initial_ability_mean},
          {"initial_ability_scale", c.initial_ability_scale},
          {"kc_ability_spread", c.kc_ability_spread},
          {"gain", c.gain},
          {"kc_difficulty_scale", c.kc_difficulty_scale},
          {"seed", c.seed}};
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_students", c.n_students);
  get("n_questions", c.n_questions);
  get("n_kcs", c.n_kcs);
  get("min_kcs_per_question", c.min_kcs_per_question);
  get("max_kcs_per_question", c.max_kcs_per_question);
  get("min_steps", c.min_steps);
  get("max_steps", c.max_steps);
  get("initial_ability_mean", c.initial_ability_mean);
  get("initial_ability_scale", c.initial_ability_scale);
  get("kc_ability_spread", c.kc_ability_spread);
  get("gain", c.gain);
  get("kc_difficulty_scale", c.kc_difficulty_scale);
  get("seed", c.seed);
  c.check();
  return c;
}

Simulation simulate(const SimConfig& config) {
  config.check();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> kc_difficulty(std::size_t(config.n_kcs));
  for (auto& d : kc_difficulty) d = config.kc_difficulty_scale * normal(rng);

  std::vector<std::vector<int>> question_kcs(std::size_t(config.n_questions));
  std::vector<double> question_difficulty(std::size_t(config.n_questions));
  std::vector<int> all_kcs(std::size_t(config.n_kcs));
  std::iota(all_kcs.begin(), all_kcs.end(), 0);
  std::uniform_int_distribution<int> kc_count(config.min_kcs_per_question, config.max_kcs_per_question);
  for (std::size_t q = 0; q < question_kcs.size(); ++q) {
    const int k = kc_count(rng);
    std::shuffle(all_kcs.begin(), all_kcs.end(), rng);
    question_kcs[q].assign(all_kcs.begin(), all_kcs.begin() + k);
    std::sort(question_kcs[q].begin(), question_kcs[q].end());
    double b = 0.0;
    for (int kc : question_kcs[q]) b += kc_difficulty[std::size_t(kc)];
    question_difficulty[q] = b / double(k);
  }

  std::vector<std::string> kc_names(std::size_t(config.n_kcs));
  for (int k = 0; k < config.n_kcs; ++k) kc_names[std::size_t(k)] = padded_id('k', k, config.n_kcs);

  std::uniform_int_distribution<int> length(config.min_steps, config.max_steps);
  std::uniform_int_distribution<int> pick_question(0, config.n_questions - 1);

  DatasetBuilder builder;
  std::vector<std::vector<double>> probabilities;
  std::size_t row = 0;
  for (int s = 0; s < config.n_students; ++s) {
    const std::string student = padded_id('s', s, config.n_students);
    const double theta = config.initial_ability_mean + config.initial_ability_scale * normal(rng);
    std::vector<double> ability(std::size_t(config.n_kcs));
    for (auto& a : ability) a = theta + config.kc_ability_spread * normal(rng);

    const int steps = length(rng);
    std::vector<double> probs;
    for (int t = 0; t < steps; ++t) {
      const auto q = std::size_t(pick_question(rng));
      double mastery = 0.0;
      for (int kc : question_kcs[q]) mastery += ability[std::size_t(kc)];
      mastery /= double(question_kcs[q].size());
      const double p = sigmoid(mastery - question_difficulty[q]);
      const int response = unit(rng) < p ? 1 : 0;
      for (int kc : question_kcs[q]) ability[std::size_t(kc)] += config.gain;

      std::vector<std::string> kcs;
      for (int kc : question_kcs[q]) kcs.push_back(kc_names[std::size_t(kc)]);
      builder.add(student, padded_id('q', int(q), config.n_questions), kcs, response,
                  kEpochMs + std::int64_t(t) * kStepMs, ++row);
      probs.push_back(p);
    }
    probabilities.push_back(std::move(probs));
  }

  Simulation sim;
  sim.dataset = builder.build();
  sim.probabilities = std::move(probabilities);
  // KC vocabulary is sorted by zero-padded name, so only used KCs remain, in index order.
  for (const auto& name : sim.dataset.kc_vocab)
    sim.kc_difficulty.push_back(kc_difficulty[std::size_t(std::stoi(name.substr(1)))]);
  return sim;
}

Dataset generate(const SimConfig& config) { return simulate(config).dataset; }

std::vector<std::vector<double>> oracle_probabilities(const SimConfig& config, const Dataset& dataset) {
  auto sim = simulate(config);
  if (!(sim.dataset == dataset))
    throw Error("oracle_probabilities: dataset was not generated by this simulator config");
  return std::move(sim.probabilities);
}

void write_simulation(const SimConfig& config, const Simulation& sim, const std::filesystem::path& csv) {
  write_canonical(sim.dataset, csv);
  nlohmann::json side;
  side["config"] = to_json(config);
  side["kc_vocab"] = sim.dataset.kc_vocab;
  side["kc_difficulty"] = sim.kc_difficulty;
  nlohmann::json probs = nlohmann::json::object();
  for (std::size_t s = 0; s < sim.dataset.sequences.size(); ++s)
    probs[sim.dataset.sequences[s].student_id] = sim.probabilities[s];
  side["oracle_probabilities"] = std::move(probs);
  std::ofstream out(csv.string() + ".sim.json");
  if (!out) throw Error("cannot write sidecar for " + csv.string());
  out << side.dump(2) << '\n';
}

}  // namespace ktbench
