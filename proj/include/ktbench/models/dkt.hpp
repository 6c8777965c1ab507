#pragma once

#include <cstdint>
#include <string>

#include "ktbench/models/model.hpp"

namespace ktbench {

// DKT+ regularization weights. All zero gives plain DKT.
struct DktRegularization {
  double reconstruction = 0.0;  // lambda_r
  double waviness_l1 = 0.0;     // lambda_w1
  double waviness_l2 = 0.0;     // lambda_w2

  bool any() const { return reconstruction != 0.0 || waviness_l1 != 0.0 || waviness_l2 != 0.0; }
};

struct DktConfig {
  int num_items = 0;
  int embedding_size = 64;
  int hidden_size = 64;
  DktRegularization regularization;
  bool plus = false;  // tag as DKT+ (regularized loss)
  std::uint64_t init_seed = 42;
};

// Single-layer LSTM over interaction embeddings (row item + response * N),
// with a dense sigmoid output over all items.
template <typename Scalar>
class DktModel final : public SequenceModel<Scalar> {
  using Base = SequenceModel<Scalar>;
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;

 public:
  using State = typename Base::State;

  enum Param : std::size_t { kEmbedding, kInputWeights, kRecurrentWeights, kGateBias, kOutputWeights, kOutputBias };

  explicit DktModel(const DktConfig& config) : config_(config) {
    const auto& c = config_;
    if (c.num_items < 1 || c.embedding_size < 1 || c.hidden_size < 1) throw Error("DktConfig: sizes must be >= 1");
    const Eigen::Index n = c.num_items, e = c.embedding_size, h = c.hidden_size;
    std::mt19937_64 rng(c.init_seed);
    auto& p = this->params_;
    p.push_back({"embedding", Mat(e, 2 * n)});  // one column per interaction
    p.push_back({"lstm.input_weights", Mat(4 * h, e)});
    p.push_back({"lstm.recurrent_weights", Mat(4 * h, h)});
    p.push_back({"lstm.bias", Mat::Zero(4 * h, 1)});
    p.push_back({"output.weights", Mat(n, h)});
    p.push_back({"output.bias", Mat::Zero(n, 1)});
    normal_init(p[kEmbedding].value, rng, 0.1);
    xavier_uniform(p[kInputWeights].value, rng, e, h);
    xavier_uniform(p[kRecurrentWeights].value, rng, h, h);
    xavier_uniform(p[kOutputWeights].value, rng, h, n);
  }

  std::string architecture() const override { return config_.plus || config_.regularization.any() ? "dkt+" : "dkt"; }
  int num_items() const override { return config_.num_items; }
  const DktConfig& config() const { return config_; }

  nlohmann::json hyperparameters() const override {
    return {{"embedding_size", config_.embedding_size},
            {"hidden_size", config_.hidden_size},
            {"lambda_r", config_.regularization.reconstruction},
            {"lambda_w1", config_.regularization.waviness_l1},
            {"lambda_w2", config_.regularization.waviness_l2},
            {"dropout", this->dropout_}};
  }

  State init_state() const override {
    State s;
    s.hidden = Vec::Zero(config_.hidden_size);
    s.cell = Vec::Zero(config_.hidden_size);
    return s;
  }

  State advance(State state, int item, Scalar response) const override {
    const auto& emb = param(kEmbedding);
    Vec x;
    if (response == Scalar(0) || response == Scalar(1)) {
      x = emb.col(this->encode(item, int(response)));
    } else {
      x = (Scalar(1) - response) * emb.col(this->encode(item, 0)) + response * emb.col(this->encode(item, 1));
    }
    const Eigen::Index h = config_.hidden_size;
    Vec a = param(kInputWeights) * x + param(kRecurrentWeights) * state.hidden + param(kGateBias);
    Vec in = logistic(a.segment(0, h));
    Vec forget = logistic(a.segment(h, h));
    Vec cand = a.segment(2 * h, h).array().tanh().matrix();
    Vec out = logistic(a.segment(3 * h, h));
    state.cell = forget.cwiseProduct(state.cell) + in.cwiseProduct(cand);
    state.hidden = out.cwiseProduct(state.cell.array().tanh().matrix());
    ++state.observed;
    return state;
  }

  Scalar query(const State& state, int item) const override {
    const Scalar z = param(kOutputWeights).row(item).dot(state.hidden) + param(kOutputBias)(item, 0);
    return open_unit(sigmoid(z));
  }

  LossResult<Scalar> forward_loss(std::span<const Window> batch, Gradients<Scalar>* grad = nullptr,
                                  std::mt19937_64* dropout_rng = nullptr) const override {
    this->check_batch(batch);
    const Eigen::Index nb = Eigen::Index(batch.size());
    const Eigen::Index n = config_.num_items, e = config_.embedding_size, h = config_.hidden_size;
    std::size_t steps = 0;
    for (const auto& w : batch) steps = std::max(steps, w.valid_len);

    LossResult<Scalar> result;
    result.predictions.resize(batch.size());
    if (steps < 2) return result;
    const std::size_t outputs = steps - 1;  // outputs after steps 0..T-2

    const auto& emb = param(kEmbedding);
    const auto& wx = param(kInputWeights);
    const auto& wh = param(kRecurrentWeights);
    const auto& bias = param(kGateBias);
    const auto& wo = param(kOutputWeights);
    const auto& bo = param(kOutputBias);

    std::vector<Mat> xs(steps), ig(steps), fg(steps), gg(steps), og(steps), cs(steps), tcs(steps), hs(steps), masks(steps);
    std::vector<Mat> ys(outputs), hds(outputs);
    Mat hprev = Mat::Zero(h, nb), cprev = Mat::Zero(h, nb);
    for (std::size_t t = 0; t < steps; ++t) {
      xs[t] = Mat::Zero(e, nb);
      for (Eigen::Index b = 0; b < nb; ++b) {
        const auto& w = batch[std::size_t(b)];
        if (t < w.valid_len) xs[t].col(b) = emb.col(this->encode(w.steps[t].item, w.steps[t].response));
      }
      Mat a = wx * xs[t] + wh * hprev;
      a.colwise() += bias.col(0);
      ig[t] = logistic(a.topRows(h));
      fg[t] = logistic(a.middleRows(h, h));
      gg[t] = a.middleRows(2 * h, h).array().tanh().matrix();
      og[t] = logistic(a.bottomRows(h));
      cs[t] = fg[t].cwiseProduct(cprev) + ig[t].cwiseProduct(gg[t]);
      tcs[t] = cs[t].array().tanh().matrix();
      hs[t] = og[t].cwiseProduct(tcs[t]);
      hprev = hs[t];
      cprev = cs[t];
      if (t < outputs) {
        masks[t] = this->dropout_mask(h, nb, dropout_rng);
        hds[t] = hs[t].cwiseProduct(masks[t]);
        Mat z = wo * hds[t];
        z.colwise() += bo.col(0);
        ys[t] = z;  // logits for now
      }
    }

    // Loss terms and their gradients w.r.t. logits.
    const auto& reg = config_.regularization;
    std::size_t n_next = 0, n_wav = 0;
    for (const auto& w : batch) {
      if (w.valid_len >= 2) n_next += w.valid_len - 1;
      if (w.valid_len >= 3) n_wav += (w.valid_len - 2) * std::size_t(n);
    }
    std::vector<Mat> dz(outputs, Mat::Zero(n, nb));
    std::vector<Mat> probs(outputs);
    for (std::size_t t = 0; t < outputs; ++t) probs[t] = logistic(ys[t]);

    Scalar next_sum = 0, recon_sum = 0, l1_sum = 0, l2_sum = 0;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const auto& w = batch[std::size_t(b)];
      auto& preds = result.predictions[std::size_t(b)];
      for (std::size_t t = 0; t + 1 < w.valid_len; ++t) {
        const auto& next = w.steps[t + 1];
        const Scalar z = ys[t](next.item, b);
        next_sum += softplus(z) - Scalar(next.response) * z;
        dz[t](next.item, b) += (probs[t](next.item, b) - Scalar(next.response)) / Scalar(n_next);
        preds.push_back(probs[t](next.item, b));

        if (reg.reconstruction != 0.0) {
          const auto& cur = w.steps[t];
          const Scalar zc = ys[t](cur.item, b);
          recon_sum += softplus(zc) - Scalar(cur.response) * zc;
          dz[t](cur.item, b) += Scalar(reg.reconstruction) * (probs[t](cur.item, b) - Scalar(cur.response)) / Scalar(n_next);
        }
      }
      if (reg.waviness_l1 == 0.0 && reg.waviness_l2 == 0.0) continue;
      for (std::size_t t = 0; t + 2 < w.valid_len; ++t) {
        const Vec diff = probs[t + 1].col(b) - probs[t].col(b);
        l1_sum += diff.cwiseAbs().sum();
        l2_sum += diff.squaredNorm();
        const Vec dy = (Scalar(reg.waviness_l1) * diff.array().sign() + Scalar(2 * reg.waviness_l2) * diff.array()).matrix() /
                       Scalar(n_wav);
        dz[t + 1].col(b) += dy.cwiseProduct(sigmoid_slope(probs[t + 1].col(b)));
        dz[t].col(b) -= dy.cwiseProduct(sigmoid_slope(probs[t].col(b)));
      }
    }
    result.targets = n_next;
    if (n_next > 0) {
      result.loss = next_sum / Scalar(n_next) + Scalar(reg.reconstruction) * recon_sum / Scalar(n_next);
    }
    if (n_wav > 0)
      result.loss += Scalar(reg.waviness_l1) * l1_sum / Scalar(n_wav) + Scalar(reg.waviness_l2) * l2_sum / Scalar(n_wav);

    if (!grad || n_next == 0) return result;

    auto& g = *grad;
    Mat dh_next = Mat::Zero(h, nb), dc_next = Mat::Zero(h, nb);
    for (std::size_t t = steps; t-- > 0;) {
      Mat dh = dh_next;
      if (t < outputs) {
        g[kOutputWeights].noalias() += dz[t] * hds[t].transpose();
        g[kOutputBias] += dz[t].rowwise().sum();
        dh += (wo.transpose() * dz[t]).cwiseProduct(masks[t]);
      }
      const Mat& cprev_t = t > 0 ? cs[t - 1] : Mat::Zero(h, nb).eval();
      const Mat& hprev_t = t > 0 ? hs[t - 1] : Mat::Zero(h, nb).eval();
      Mat dout = dh.cwiseProduct(tcs[t]);
      Mat dc = dh.cwiseProduct(og[t]).cwiseProduct((Scalar(1) - tcs[t].array().square()).matrix()) + dc_next;
      Mat da(4 * h, nb);
      da.topRows(h) = dc.cwiseProduct(gg[t]).cwiseProduct(sigmoid_slope(ig[t]));
      da.middleRows(h, h) = dc.cwiseProduct(cprev_t).cwiseProduct(sigmoid_slope(fg[t]));
      da.middleRows(2 * h, h) = dc.cwiseProduct(ig[t]).cwiseProduct((Scalar(1) - gg[t].array().square()).matrix());
      da.bottomRows(h) = dout.cwiseProduct(sigmoid_slope(og[t]));

      g[kInputWeights].noalias() += da * xs[t].transpose();
      g[kRecurrentWeights].noalias() += da * hprev_t.transpose();
      g[kGateBias] += da.rowwise().sum();
      const Mat dx = wx.transpose() * da;
      for (Eigen::Index b = 0; b < nb; ++b) {
        const auto& w = batch[std::size_t(b)];
        if (t < w.valid_len) g[kEmbedding].col(this->encode(w.steps[t].item, w.steps[t].response)) += dx.col(b);
      }
      dh_next = wh.transpose() * da;
      dc_next = dc.cwiseProduct(fg[t]);
    }
    return result;
  }

 private:
  const Mat& param(Param p) const { return this->params_[p].value; }

  template <typename Derived>
  static Mat logistic(const Eigen::MatrixBase<Derived>& a) {
    return (Scalar(1) + (-a.array()).exp()).inverse().matrix();
  }

  template <typename Derived>
  static Mat sigmoid_slope(const Eigen::MatrixBase<Derived>& y) {
    return (y.array() * (Scalar(1) - y.array())).matrix();
  }

  DktConfig config_;
};

}  // namespace ktbench
