#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ktbench/core.hpp"

namespace ktbench {

// Logistic student simulator. Each student has a per-KC ability that starts
// from a seeded draw and grows by `gain` on every practice of that KC; a
// question with KC set K is answered correctly with probability
// sigmoid(mean_{k in K} ability_k - difficulty_q), difficulty_q being the mean
// difficulty of its KCs. All KC steps of a question share its one response.
struct SimConfig {
  int n_students = 500;
  int n_questions = 200;
  int n_kcs = 20;
  int min_kcs_per_question = 1;
  int max_kcs_per_question = 1;
  int min_steps = 50;
  int max_steps = 100;
  double initial_ability_mean = 0.0;
  double initial_ability_scale = 1.0;  // sd of the student-wide ability
  double kc_ability_spread = 0.5;      // sd of per-KC deviations from it
  double gain = 0.1;
  double kc_difficulty_scale = 1.0;
  std::uint64_t seed = 42;

  void check() const;
  double mean_kcs_per_question() const {
    return 0.5 * (min_kcs_per_question + max_kcs_per_question);
  }
  bool operator==(const SimConfig&) const = default;
};

nlohmann::json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const nlohmann::json& j);

struct Simulation {
  Dataset dataset;
  // Bernoulli parameter of every interaction, aligned with dataset.sequences.
  std::vector<std::vector<double>> probabilities;
  std::vector<double> kc_difficulty;  // indexed by KC vocabulary index
};

Simulation simulate(const SimConfig& config);

Dataset generate(const SimConfig& config);

// Regenerates from the config and returns the true probabilities; throws if
// the dataset was not produced by this config.
std::vector<std::vector<double>> oracle_probabilities(const SimConfig& config, const Dataset& dataset);

// Writes <csv> in the canonical format and <csv>.sim.json alongside it.
void write_simulation(const SimConfig& config, const Simulation& sim, const std::filesystem::path& csv);

}  // namespace ktbench
