#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ktbench/models/model.hpp"
#include "ktbench/protocols.hpp"

namespace ktbench {

inline constexpr int kMaxEpochs = 200;
inline constexpr int kDefaultPatience = 10;

struct TrainConfig {
  double learning_rate = 1e-3;
  double dropout = 0.0;
  int batch_size = 256;
  int max_epochs = kMaxEpochs;
  int patience = kDefaultPatience;
  std::uint64_t seed = 42;
  std::string fold_label = "validation";  // named in validation errors

  void check() const {
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0, 1)");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (max_epochs < 1 || max_epochs > kMaxEpochs) throw Error("max_epochs must be in [1, 200]");
    if (patience < 1) throw Error("patience must be >= 1");
  }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(const Parameters<Scalar>& params, double learning_rate, AdamOptions options = {})
      : lr_(learning_rate), opt_(options), m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(Parameters<Scalar>& params, const Gradients<Scalar>& grad) {
    ++t_;
    const Scalar b1 = Scalar(opt_.beta1), b2 = Scalar(opt_.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
    const Scalar step = Scalar(lr_) / c1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grad[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grad[i].cwiseAbs2();
      params[i].value.array() -=
          step * m_[i].array() / ((v_[i].array() / c2).sqrt() + Scalar(opt_.epsilon));
    }
  }

 private:
  double lr_;
  AdamOptions opt_;
  Gradients<Scalar> m_, v_;
  long t_ = 0;
};

struct TrainHistory {
  double initial_val_auc = 0.0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_auc;     // per epoch
  int best_epoch = 0;              // 1-based; 0 means no epoch beat the initial model
  double best_val_auc = -std::numeric_limits<double>::infinity();
  int epochs_run = 0;
  bool stopped_early = false;
};

template <typename Scalar>
using Validator = std::function<double(const SequenceModel<Scalar>&)>;

// Leakage-free validation score: question-level LF-AVG AUC, all-in-one.
template <typename Scalar>
Validator<Scalar> all_in_one_validator(std::span<const ExpandedSequence> val_sequences) {
  return [val_sequences](const SequenceModel<Scalar>& model) {
    const auto records = eval_all_in_one(model, val_sequences);
    return question_level_metrics(records).auc;
  };
}

// Mini-batch Adam with early stopping: stops once `patience` epochs pass
// without a strictly better validation AUC, or at max_epochs, and leaves the
// model holding the best-epoch parameters.
template <typename Scalar>
TrainHistory train(SequenceModel<Scalar>& model, std::span<const Window> windows, const Validator<Scalar>& validate,
                   const TrainConfig& config) {
  config.check();
  if (windows.empty()) throw Error("train: no training windows");
  model.set_dropout(config.dropout);

  auto score = [&]() {
    try {
      return validate(model);
    } catch (const MetricError& e) {
      throw Error("validation AUC undefined on fold '" + config.fold_label + "': " + e.what());
    }
  };

  TrainHistory history;
  history.initial_val_auc = score();
  history.best_val_auc = history.initial_val_auc;
  Parameters<Scalar> best = model.parameters();

  std::mt19937_64 rng(config.seed);
  Adam<Scalar> adam(model.parameters(), config.learning_rate);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Window> batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + std::size_t(config.batch_size));
      for (std::size_t i = start; i < stop; ++i) batch.push_back(windows[order[i]]);
      auto grad = zeros_like(model.parameters());
      const auto res = model.forward_loss(batch, &grad, &rng);
      if (res.targets == 0) continue;
      adam.step(model.parameters(), grad);
      loss_sum += double(res.loss);
      ++batches;
    }
    history.train_loss.push_back(batches ? loss_sum / double(batches) : 0.0);

    const double auc = score();
    history.val_auc.push_back(auc);
    history.epochs_run = epoch;
    if (auc > history.best_val_auc) {
      history.best_val_auc = auc;
      history.best_epoch = epoch;
      best = model.parameters();
    } else if (epoch - history.best_epoch >= config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  model.parameters() = std::move(best);
  return history;
}

template <typename Scalar>
TrainHistory train(SequenceModel<Scalar>& model, std::span<const Window> windows,
                   std::span<const ExpandedSequence> val_sequences, const TrainConfig& config) {
  return train(model, windows, all_in_one_validator<Scalar>(val_sequences), config);
}

}  // namespace ktbench
