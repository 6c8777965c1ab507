#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ktbench/core.hpp"
#include "ktbench/models/model.hpp"
#include "ktbench/models/registry.hpp"
#include "ktbench/preprocess.hpp"

namespace ktbench::testing {

struct Row {
  std::string student, question;
  std::vector<std::string> kcs;
  std::optional<int> response;
  std::optional<std::int64_t> timestamp;
};

inline Dataset build(const std::vector<Row>& rows, std::vector<std::string>* warnings = nullptr) {
  DatasetBuilder b;
  std::size_t line = 2;
  for (const auto& r : rows) b.add(r.student, r.question, r.kcs, r.response, r.timestamp, line++);
  auto ds = b.build();
  if (warnings) *warnings = b.warnings();
  return ds;
}

// Every positive/negative pair counted directly; ties score one half.
inline double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline Window make_window(const std::vector<std::pair<int, int>>& steps, std::size_t length) {
  Window w;
  w.steps.resize(length);
  for (std::size_t t = 0; t < steps.size(); ++t)
    w.steps[t] = {steps[t].first, int(t), steps[t].second, int(t)};
  w.valid_len = steps.size();
  return w;
}

inline std::vector<Window> random_windows(int items, std::size_t count, std::size_t length, std::size_t min_valid,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> item(0, items - 1), bit(0, 1);
  std::uniform_int_distribution<std::size_t> valid(min_valid, length);
  std::vector<Window> out;
  for (std::size_t w = 0; w < count; ++w) {
    std::vector<std::pair<int, int>> steps(valid(rng));
    for (auto& s : steps) s = {item(rng), bit(rng)};
    out.push_back(make_window(steps, length));
  }
  return out;
}

struct GradCheck {
  std::string parameter;
  double max_rel_error = 0.0;
};

// Central differences of forward_loss against backward, every entry of every
// parameter tensor.
inline std::vector<GradCheck> gradient_check(SequenceModel<double>& model, std::span<const Window> batch,
                                             double h = 1e-5) {
  const auto analytic = backward(model, batch);
  std::vector<GradCheck> out;
  auto& params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheck gc{params[p].name, 0.0};
    auto& m = params[p].value;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double saved = m(i, j);
        m(i, j) = saved + h;
        const double up = model.forward_loss(batch).loss;
        m(i, j) = saved - h;
        const double down = model.forward_loss(batch).loss;
        m(i, j) = saved;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic[p](i, j);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        gc.max_rel_error = std::max(gc.max_rel_error, rel);
      }
    }
    out.push_back(gc);
  }
  return out;
}

// Laplace-smoothed running rate of correct responses, (1 + correct) / (2 +
// observed), identical for every item. Strictly increasing in the number of
// observed correct responses, so sibling leakage shows up without training.
class CorrectRateModel final : public SequenceModel<double> {
 public:
  explicit CorrectRateModel(int items) : items_(items) {
    params_.push_back({"prior", Matrix<double>::Ones(1, 1)});
  }
  std::string architecture() const override { return "correct-rate"; }
  int num_items() const override { return items_; }
  nlohmann::json hyperparameters() const override { return nlohmann::json::object(); }
  State init_state() const override {
    State s;
    s.hidden = Vector<double>::Zero(2);
    return s;
  }
  State advance(State s, int, double response) const override {
    s.hidden(0) += response;
    s.hidden(1) += 1.0;
    ++s.observed;
    return s;
  }
  double query(const State& s, int) const override {
    const double prior = params_[0].value(0, 0);
    return (prior + s.hidden(0)) / (2 * prior + s.hidden(1));
  }
  LossResult<double> forward_loss(std::span<const Window> batch, Gradients<double>* = nullptr,
                                  std::mt19937_64* = nullptr) const override {
    LossResult<double> r;
    r.predictions.resize(batch.size());
    return r;
  }

 private:
  int items_;
};

inline void register_correct_rate() {
  register_model("correct-rate", [](int items, const nlohmann::json&, std::uint64_t) {
    return std::make_unique<CorrectRateModel>(items);
  });
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ktbench::testing
