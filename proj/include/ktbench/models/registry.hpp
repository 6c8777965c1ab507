#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ktbench/models/model.hpp"

namespace ktbench {

using Model = SequenceModel<double>;

// Builds a model from its hyperparameter object (see each model's
// hyperparameters()). Missing keys take defaults.
using ModelFactory =
    std::function<std::unique_ptr<Model>(int num_items, const nlohmann::json& hyperparameters, std::uint64_t seed)>;

// Built in: "dkt", "dkt+", "sakt". Further architectures plug in here.
void register_model(const std::string& tag, ModelFactory factory);
std::vector<std::string> registered_models();
std::unique_ptr<Model> make_model(const std::string& tag, int num_items, const nlohmann::json& hyperparameters,
                                  std::uint64_t seed);

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_to_json(const Model& model);
std::unique_ptr<Model> checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace ktbench
