#include <fstream>
#include <map>
#include <mutex>

#include "ktbench/models/dkt.hpp"
#include "ktbench/models/registry.hpp"
#include "ktbench/models/sakt.hpp"

namespace ktbench {

namespace {

template <typename T>
T value_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::unique_ptr<Model> build_dkt(int num_items, const nlohmann::json& h, std::uint64_t seed, bool plus) {
  DktConfig c;
  c.num_items = num_items;
  c.embedding_size = value_or(h, "embedding_size", 64);
  c.hidden_size = value_or(h, "hidden_size", c.embedding_size);
  c.plus = plus;
  if (plus) {
    c.regularization.reconstruction = value_or(h, "lambda_r", 0.0);
    c.regularization.waviness_l1 = value_or(h, "lambda_w1", 0.0);
    c.regularization.waviness_l2 = value_or(h, "lambda_w2", 0.0);
  } else if (value_or(h, "lambda_r", 0.0) != 0.0 || value_or(h, "lambda_w1", 0.0) != 0.0 ||
             value_or(h, "lambda_w2", 0.0) != 0.0) {
    throw Error("dkt takes no regularization weights; use dkt+");
  }
  c.init_seed = seed;
  auto model = std::make_unique<DktModel<double>>(c);
  model->set_dropout(value_or(h, "dropout", 0.0));
  return model;
}

std::unique_ptr<Model> build_sakt(int num_items, const nlohmann::json& h, std::uint64_t seed) {
  SaktConfig c;
  c.num_items = num_items;
  c.embedding_size = value_or(h, "embedding_size", 64);
  c.num_heads = value_or(h, "num_heads", 4);
  c.num_blocks = value_or(h, "num_blocks", 1);
  c.max_length = value_or(h, "max_length", 200);
  c.init_seed = seed;
  auto model = std::make_unique<SaktModel<double>>(c);
  model->set_dropout(value_or(h, "dropout", 0.0));
  return model;
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, ModelFactory> factories{
      {"dkt", [](int n, const nlohmann::json& h, std::uint64_t s) { return build_dkt(n, h, s, false); }},
      {"dkt+", [](int n, const nlohmann::json& h, std::uint64_t s) { return build_dkt(n, h, s, true); }},
      {"sakt", build_sakt},
  };
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_model(const std::string& tag, ModelFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[tag] = std::move(factory);
}

std::vector<std::string> registered_models() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> tags;
  for (const auto& [tag, f] : r.factories) tags.push_back(tag);
  return tags;
}

std::unique_ptr<Model> make_model(const std::string& tag, int num_items, const nlohmann::json& hyperparameters,
                                  std::uint64_t seed) {
  ModelFactory factory;
  {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    auto it = r.factories.find(tag);
    if (it == r.factories.end()) {
      std::string known;
      for (const auto& [t, f] : r.factories) known += (known.empty() ? "" : ", ") + t;
      throw Error("model '" + tag + "' is not available (registered: " + known + ")");
    }
    factory = it->second;
  }
  return factory(num_items, hyperparameters, seed);
}

nlohmann::json checkpoint_to_json(const Model& model) {
  nlohmann::json j;
  j["format"] = "ktbench-checkpoint";
  j["version"] = kCheckpointVersion;
  j["architecture"] = model.architecture();
  j["num_items"] = model.num_items();
  j["hyperparameters"] = model.hyperparameters();
  auto& params = j["parameters"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    std::vector<double> data(p.value.data(), p.value.data() + p.value.size());
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", data}});
  }
  return j;
}

std::unique_ptr<Model> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ktbench-checkpoint") throw Error("not a ktbench checkpoint");
  if (!j.contains("version")) throw Error("checkpoint has no version field");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + j.at("version").dump());
  auto model = make_model(j.at("architecture").get<std::string>(), j.at("num_items").get<int>(),
                          j.at("hyperparameters"), 0);
  auto& params = model->parameters();
  const auto& stored = j.at("parameters");
  if (stored.size() != params.size()) throw Error("checkpoint parameter count does not match architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& s = stored[i];
    auto& p = params[i];
    if (s.at("name").get<std::string>() != p.name || s.at("rows").get<Eigen::Index>() != p.value.rows() ||
        s.at("cols").get<Eigen::Index>() != p.value.cols())
      throw Error("checkpoint tensor '" + s.at("name").get<std::string>() + "' does not match " + p.name);
    const auto data = s.at("data").get<std::vector<double>>();
    if (Eigen::Index(data.size()) != p.value.size()) throw Error("checkpoint tensor size mismatch for " + p.name);
    std::copy(data.begin(), data.end(), p.value.data());
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << checkpoint_to_json(model).dump() << '\n';
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace ktbench
