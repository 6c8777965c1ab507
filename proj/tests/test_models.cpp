#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ktbench/models/dkt.hpp"
#include "ktbench/models/registry.hpp"
#include "ktbench/models/sakt.hpp"
#include "ktbench/models/train.hpp"
#include "support.hpp"

using namespace ktbench;
using ktbench::testing::gradient_check;
using ktbench::testing::make_window;
using ktbench::testing::random_windows;

namespace {

DktConfig tiny_dkt(bool plus) {
  DktConfig c;
  c.num_items = 5;
  c.embedding_size = 4;
  c.hidden_size = 4;
  c.init_seed = 3;
  if (plus) {
    c.plus = true;
    c.regularization = {0.2, 0.3, 3.0};
  }
  return c;
}

SaktConfig tiny_sakt(int blocks) {
  SaktConfig c;
  c.num_items = 5;
  c.embedding_size = 4;
  c.num_heads = 2;
  c.num_blocks = blocks;
  c.max_length = 6;
  c.init_seed = 3;
  return c;
}

std::vector<Window> tiny_batch() { return random_windows(5, 3, 6, 2, 17); }

void expect_gradients(SequenceModel<double>& model) {
  const auto batch = tiny_batch();
  for (const auto& gc : gradient_check(model, batch)) EXPECT_LT(gc.max_rel_error, 1e-4) << gc.parameter;
}

std::vector<std::pair<int, int>> random_steps(std::size_t n, int items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> s(n);
  for (auto& x : s) x = {int(rng() % std::uint64_t(items)), int(rng() % 2)};
  return s;
}

// query() after feeding steps[0..t] must equal the training-path prediction
// for step t + 1.
void expect_inference_matches_training(const SequenceModel<double>& model, std::size_t len) {
  const auto steps = random_steps(len, model.num_items(), 99);
  const auto w = make_window(steps, len);
  const auto res = model.forward_loss(std::span<const Window>(&w, 1));
  auto state = model.init_state();
  for (std::size_t t = 0; t + 1 < len; ++t) {
    state = model.advance(std::move(state), steps[t].first, steps[t].second);
    EXPECT_NEAR(model.query(state, steps[t + 1].first), res.predictions[0][t], 1e-12) << "t=" << t;
  }
}

}  // namespace

TEST(Gradients, Dkt) {
  DktModel<double> m(tiny_dkt(false));
  expect_gradients(m);
}

TEST(Gradients, DktPlusWithRegularizers) {
  DktModel<double> m(tiny_dkt(true));
  EXPECT_EQ(m.architecture(), "dkt+");
  expect_gradients(m);
}

TEST(Gradients, SaktOneBlock) {
  SaktModel<double> m(tiny_sakt(1));
  expect_gradients(m);
}

TEST(Gradients, SaktStackedBlocks) {
  SaktModel<double> m(tiny_sakt(2));
  expect_gradients(m);
}

TEST(Loss, MeanNextStepCrossEntropy) {
  DktModel<double> m(tiny_dkt(false));
  const auto batch = tiny_batch();
  const auto res = m.forward_loss(batch);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t t = 0; t + 1 < batch[b].valid_len; ++t) {
      const double p = res.predictions[b][t];
      const int y = batch[b].steps[t + 1].response;
      sum += -(y * std::log(p) + (1 - y) * std::log(1 - p));
      ++n;
    }
  EXPECT_EQ(res.targets, n);
  EXPECT_NEAR(res.loss, sum / double(n), 1e-12);
}

TEST(Loss, DuplicatingTheBatchLeavesLossUnchanged) {
  for (int which = 0; which < 2; ++which) {
    std::unique_ptr<SequenceModel<double>> m;
    if (which == 0) m = std::make_unique<DktModel<double>>(tiny_dkt(true));
    else m = std::make_unique<SaktModel<double>>(tiny_sakt(2));
    auto batch = tiny_batch();
    const double once = m->forward_loss(batch).loss;
    auto twice = batch;
    twice.insert(twice.end(), batch.begin(), batch.end());
    EXPECT_NEAR(m->forward_loss(twice).loss, once, 1e-12);
  }
}

TEST(Loss, WindowsWithoutTargets) {
  DktModel<double> d(tiny_dkt(true));
  SaktModel<double> s(tiny_sakt(1));
  const std::vector<Window> batch{make_window({}, 6), make_window({{1, 1}}, 6)};
  for (const SequenceModel<double>* m : {static_cast<SequenceModel<double>*>(&d), static_cast<SequenceModel<double>*>(&s)}) {
    auto g = zeros_like(m->parameters());
    const auto r = m->forward_loss(batch, &g);
    EXPECT_EQ(r.targets, 0u);
    EXPECT_EQ(r.loss, 0.0);
    for (const auto& x : g) EXPECT_TRUE(x.isZero());
  }
}

TEST(Causality, FutureStepsDoNotChangeEarlierPredictions) {
  std::vector<std::unique_ptr<SequenceModel<double>>> models;
  models.push_back(std::make_unique<DktModel<double>>(tiny_dkt(false)));
  models.push_back(std::make_unique<SaktModel<double>>(tiny_sakt(1)));
  models.push_back(std::make_unique<SaktModel<double>>(tiny_sakt(3)));
  for (const auto& m : models) {
    auto steps = random_steps(6, 5, 1);
    const auto a = m->forward_loss(std::vector<Window>{make_window(steps, 6)});
    // mutate the response of step 4: predictions of steps 1..4 must not move
    steps[4].second = 1 - steps[4].second;
    const auto b = m->forward_loss(std::vector<Window>{make_window(steps, 6)});
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(a.predictions[0][t], b.predictions[0][t]) << m->architecture();
    EXPECT_NE(a.predictions[0][4], b.predictions[0][4]) << m->architecture();
  }
}

TEST(Inference, QueryMatchesTrainingForward) {
  DktModel<double> d(tiny_dkt(false));
  expect_inference_matches_training(d, 30);
  auto cfg = tiny_sakt(1);
  cfg.max_length = 30;
  SaktModel<double> s1(cfg);
  expect_inference_matches_training(s1, 30);
  cfg.num_blocks = 2;
  SaktModel<double> s2(cfg);
  expect_inference_matches_training(s2, 30);
}

TEST(Inference, LongSequences) {
  // recurrent: the full history; attention: the last m - 1 steps
  auto dcfg = tiny_dkt(false);
  dcfg.num_items = 7;
  DktModel<double> d(dcfg);
  const auto steps = random_steps(250, 7, 5);
  auto state = d.init_state();
  for (const auto& [item, r] : steps) {
    state = d.advance(std::move(state), item, r);
    const double p = d.query(state, 0);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_EQ(state.observed, 250u);

  SaktConfig scfg;
  scfg.num_items = 7;
  scfg.embedding_size = 8;
  scfg.num_heads = 2;
  scfg.max_length = 200;
  for (int blocks : {1, 2}) {
    scfg.num_blocks = blocks;
    SaktModel<double> s(scfg);
    auto st = s.init_state();
    for (std::size_t j = 0; j < 249; ++j) {
      st = s.advance(std::move(st), steps[j].first, steps[j].second);
      const std::size_t next = j + 1;
      if (next < 200 || next % 7 != 0) continue;
      // equivalent window: the 199 steps before `next`, then the target
      std::vector<std::pair<int, int>> ctx(steps.begin() + std::ptrdiff_t(next - 199),
                                           steps.begin() + std::ptrdiff_t(next + 1));
      const auto w = make_window(ctx, 200);
      const auto r = s.forward_loss(std::span<const Window>(&w, 1));
      EXPECT_NEAR(s.query(st, steps[next].first), r.predictions[0][198], 1e-12) << "blocks " << blocks << " j " << next;
    }
    EXPECT_EQ(st.context.size(), 199u);
  }
}

TEST(Capabilities, EarlyFusionSupport) {
  DktModel<double> d(tiny_dkt(false));
  EXPECT_FALSE(d.has_representation());
  EXPECT_THROW(d.query_repr(d.init_state(), 0), CapabilityError);
  SaktModel<double> s(tiny_sakt(1));
  EXPECT_TRUE(s.has_representation());
  auto st = s.advance(s.init_state(), 1, 1);
  EXPECT_EQ(s.output_from_repr(s.query_repr(st, 2)), s.query(st, 2));
}

TEST(Determinism, SameSeedSameModelAndTraining) {
  const auto windows = random_windows(5, 40, 12, 2, 8);
  std::vector<ExpandedSequence> val;
  for (int s = 0; s < 10; ++s) {
    ExpandedSequence e;
    e.student_id = std::to_string(s);
    for (const auto& [item, r] : random_steps(12, 5, std::uint64_t(100 + s))) {
      e.steps.push_back({item, int(e.questions.size()), r, int(e.questions.size())});
      e.questions.push_back(item);
    }
    val.push_back(e);
  }
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 8;
  cfg.dropout = 0.2;
  cfg.learning_rate = 0.01;
  for (const char* tag : {"dkt", "sakt"}) {
    auto a = make_model(tag, 5, {{"embedding_size", 8}, {"max_length", 12}}, 7);
    auto b = make_model(tag, 5, {{"embedding_size", 8}, {"max_length", 12}}, 7);
    train(*a, windows, std::span<const ExpandedSequence>(val), cfg);
    train(*b, windows, std::span<const ExpandedSequence>(val), cfg);
    for (std::size_t p = 0; p < a->parameters().size(); ++p)
      EXPECT_EQ(a->parameters()[p].value, b->parameters()[p].value) << tag;
  }
}

TEST(Registry, BuiltinsAndUnknownTag) {
  const auto tags = registered_models();
  for (const char* t : {"dkt", "dkt+", "sakt"}) EXPECT_NE(std::find(tags.begin(), tags.end(), t), tags.end());
  try {
    make_model("nope", 5, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("sakt"), std::string::npos);
  }
  EXPECT_THROW(make_model("dkt", 5, {{"lambda_r", 0.1}}, 1), Error);
  EXPECT_EQ(make_model("dkt+", 5, {{"lambda_r", 0.1}}, 1)->architecture(), "dkt+");
}

TEST(Registry, PluginModel) {
  ktbench::testing::register_correct_rate();
  auto m = make_model("correct-rate", 4, {}, 0);
  auto s = m->advance(m->init_state(), 2, 1.0);
  EXPECT_DOUBLE_EQ(m->query(s, 0), 2.0 / 3.0);
  m->parameters()[0].value(0, 0) = 2.0;
  const auto back = checkpoint_from_json(checkpoint_to_json(*m));
  EXPECT_EQ(back->architecture(), "correct-rate");
  EXPECT_EQ(back->parameters()[0].value(0, 0), 2.0);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto path = std::filesystem::temp_directory_path() / "ktbench_ckpt_test.json";
  for (const char* tag : {"dkt", "dkt+", "sakt"}) {
    nlohmann::json hyper = {{"embedding_size", 8}, {"num_blocks", 2}, {"dropout", 0.1}};
    if (std::string(tag) == "dkt+") hyper["lambda_w2"] = 3.0;
    if (std::string(tag) == "sakt") hyper.erase("lambda_w2");
    if (std::string(tag) != "sakt") hyper.erase("num_blocks");
    auto m = make_model(tag, 6, hyper, 11);
    // move away from the initialization so the seed alone cannot explain a match
    for (auto& p : m->parameters()) p.value.array() += 0.125;
    save_checkpoint(*m, path);
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back->architecture(), m->architecture());
    EXPECT_EQ(back->hyperparameters(), m->hyperparameters());
    ASSERT_EQ(back->parameters().size(), m->parameters().size());
    for (std::size_t p = 0; p < m->parameters().size(); ++p) {
      EXPECT_EQ(back->parameters()[p].name, m->parameters()[p].name);
      EXPECT_EQ(back->parameters()[p].value, m->parameters()[p].value);
    }
    auto s = back->advance(back->init_state(), 3, 1.0);
    EXPECT_EQ(back->query(s, 1), m->query(m->advance(m->init_state(), 3, 1.0), 1));
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  auto m = make_model("dkt", 4, {{"embedding_size", 4}}, 1);
  auto j = checkpoint_to_json(*m);
  auto bad = j;
  bad["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(bad), Error);
  bad = j;
  bad["parameters"][0]["rows"] = 3;
  EXPECT_THROW(checkpoint_from_json(bad), Error);
  bad = j;
  bad["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(bad), Error);
}

TEST(Train, ConfigLimits) {
  TrainConfig c;
  c.max_epochs = 201;
  EXPECT_THROW(c.check(), Error);
  c.max_epochs = 200;
  EXPECT_NO_THROW(c.check());
  c.dropout = 1.0;
  EXPECT_THROW(c.check(), Error);
}

TEST(Train, EarlyStoppingRestoresTheBestSnapshot) {
  DktModel<double> m(tiny_dkt(false));
  const auto windows = tiny_batch();
  // validation scores rise until epoch 4 (calls 0..4) and plateau afterwards
  int call = 0;
  std::vector<Parameters<double>> seen;
  Validator<double> v = [&](const SequenceModel<double>& model) {
    seen.push_back(model.parameters());
    const int epoch = call++;
    return epoch <= 4 ? 0.5 + 0.01 * epoch : 0.54;
  };
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 2;
  const auto h = train(m, windows, v, cfg);
  EXPECT_EQ(h.best_epoch, 4);
  EXPECT_EQ(h.epochs_run, 14);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_EQ(h.initial_val_auc, 0.5);
  for (std::size_t p = 0; p < seen[4].size(); ++p) EXPECT_EQ(m.parameters()[p].value, seen[4][p].value);
  EXPECT_NE(m.parameters()[0].value, seen[14][0].value);
}
