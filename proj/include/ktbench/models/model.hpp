#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ktbench/core.hpp"
#include "ktbench/preprocess.hpp"

namespace ktbench {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
};

template <typename Scalar>
using Parameters = std::vector<Parameter<Scalar>>;

// One matrix per parameter, same order and shapes.
template <typename Scalar>
using Gradients = std::vector<Matrix<Scalar>>;

template <typename Scalar>
Gradients<Scalar> zeros_like(const Parameters<Scalar>& params) {
  Gradients<Scalar> g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
  return g;
}

class CapabilityError : public Error {
 public:
  using Error::Error;
};

template <typename Scalar>
struct ObservedStep {
  int item;
  Scalar response;  // 0/1, or a probability when fed back softly
};

// Union of what the built-in model families carry between steps: recurrent
// models use hidden/cell, fixed-context attention models keep the last
// observed steps.
template <typename Scalar>
struct ModelState {
  Vector<Scalar> hidden;
  Vector<Scalar> cell;
  std::vector<ObservedStep<Scalar>> context;
  std::size_t observed = 0;
};

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  std::size_t targets = 0;
  // predictions[w][t]: probability of step t+1 of window w given steps <= t
  std::vector<std::vector<Scalar>> predictions;
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// log(1 + exp(x)) without overflow
template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Keeps probabilities reported by query() strictly inside (0, 1).
template <typename Scalar>
Scalar open_unit(Scalar p) {
  constexpr Scalar eps = std::numeric_limits<Scalar>::epsilon();
  return std::clamp(p, eps, Scalar(1) - eps);
}

// Causal knowledge-tracing model: advance on observed (item, response) steps
// and query the probability of a correct response on any item.
template <typename Scalar>
class SequenceModel {
 public:
  using State = ModelState<Scalar>;

  virtual ~SequenceModel() = default;

  virtual std::string architecture() const = 0;
  virtual int num_items() const = 0;
  virtual nlohmann::json hyperparameters() const = 0;

  virtual State init_state() const = 0;
  virtual State advance(State state, int item, Scalar response) const = 0;
  virtual Scalar query(const State& state, int item) const = 0;

  // Pre-output representation, needed for early fusion.
  virtual bool has_representation() const { return false; }
  virtual Vector<Scalar> query_repr(const State&, int) const {
    throw CapabilityError(architecture() + " does not expose per-item representations");
  }
  virtual Scalar output_from_repr(const Vector<Scalar>&) const {
    throw CapabilityError(architecture() + " does not expose per-item representations");
  }

  // Mean next-step binary cross-entropy over the batch plus any model-specific
  // regularizers. Accumulates into `grad` when given; dropout is applied only
  // when `dropout_rng` is given.
  virtual LossResult<Scalar> forward_loss(std::span<const Window> batch, Gradients<Scalar>* grad = nullptr,
                                          std::mt19937_64* dropout_rng = nullptr) const = 0;

  Parameters<Scalar>& parameters() { return params_; }
  const Parameters<Scalar>& parameters() const { return params_; }

  double dropout() const { return dropout_; }
  void set_dropout(double p) {
    if (p < 0.0 || p >= 1.0) throw Error("dropout must be in [0, 1)");
    dropout_ = p;
  }

 protected:
  // Index of the embedding row for an (item, response) interaction.
  int encode(int item, int response) const { return item + response * num_items(); }

  void check_batch(std::span<const Window> batch) const {
    if (batch.empty()) throw Error(architecture() + ": empty batch");
    for (const auto& w : batch)
      for (std::size_t t = 0; t < w.valid_len; ++t)
        if (w.steps[t].item < 0 || w.steps[t].item >= num_items())
          throw Error(architecture() + ": item index out of range");
  }

  // Inverted-dropout mask, already scaled by 1 / (1 - p).
  Matrix<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, std::mt19937_64* rng) const {
    if (!rng || dropout_ == 0.0) return Matrix<Scalar>::Ones(rows, cols);
    std::bernoulli_distribution keep(1.0 - dropout_);
    const Scalar scale = Scalar(1.0 / (1.0 - dropout_));
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = keep(*rng) ? scale : Scalar(0);
    return m;
  }

  Parameters<Scalar> params_;
  double dropout_ = 0.0;
};

template <typename Scalar>
Gradients<Scalar> backward(const SequenceModel<Scalar>& model, std::span<const Window> batch) {
  auto grad = zeros_like(model.parameters());
  model.forward_loss(batch, &grad);
  return grad;
}

// Feeds a whole expanded sequence with its ground-truth responses.
template <typename Scalar>
ModelState<Scalar> advance_through(const SequenceModel<Scalar>& model, ModelState<Scalar> state,
                                   std::span<const ExpandedStep> steps) {
  for (const auto& s : steps) state = model.advance(std::move(state), s.item, Scalar(s.response));
  return state;
}

template <typename Scalar>
void xavier_uniform(Matrix<Scalar>& m, std::mt19937_64& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = Scalar(u(rng));
}

template <typename Scalar>
void normal_init(Matrix<Scalar>& m, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = Scalar(n(rng));
}

}  // namespace ktbench
