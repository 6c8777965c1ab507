#pragma once

#include <cstdint>
#include <string>

#include "ktbench/models/model.hpp"

namespace ktbench {

struct SaktConfig {
  int num_items = 0;
  int embedding_size = 64;  // attention and feed-forward sizes follow it
  int num_heads = 4;
  int num_blocks = 1;
  int max_length = 200;  // m; a query sees at most m - 1 previous steps
  std::uint64_t init_seed = 42;
};

// Self-attentive knowledge tracing. Queries are item embeddings; keys and
// values are interaction embeddings plus a learned position embedding. In the
// first block a query at position t attends to interactions at positions < t;
// later blocks attend over the previous block's outputs at positions <= t.
// Each block: multi-head attention, residual + layer norm, ReLU feed-forward,
// residual + layer norm. A linear sigmoid head reads the last block.
template <typename Scalar>
class SaktModel final : public SequenceModel<Scalar> {
  using Base = SequenceModel<Scalar>;
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using RowVec = RowVector<Scalar>;

 public:
  using State = typename Base::State;

  static constexpr std::size_t kItemEmbedding = 0;
  static constexpr std::size_t kInteractionEmbedding = 1;
  static constexpr std::size_t kPositionEmbedding = 2;
  static constexpr std::size_t kFirstBlock = 3;
  static constexpr std::size_t kParamsPerBlock = 16;
  enum BlockParam : std::size_t { kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kLn1G, kLn1B, kW1, kB1, kW2, kB2, kLn2G, kLn2B };

  explicit SaktModel(const SaktConfig& config) : config_(config) {
    const auto& c = config_;
    if (c.num_items < 1 || c.embedding_size < 1 || c.num_blocks < 1 || c.max_length < 2)
      throw Error("SaktConfig: sizes must be positive and max_length >= 2");
    if (c.num_heads < 1 || c.embedding_size % c.num_heads != 0)
      throw Error("SaktConfig: embedding_size must be divisible by num_heads");
    const Eigen::Index n = c.num_items, d = c.embedding_size;
    std::mt19937_64 rng(c.init_seed);
    auto& p = this->params_;
    p.push_back({"item_embedding", Mat(n, d)});
    p.push_back({"interaction_embedding", Mat(2 * n, d)});
    p.push_back({"position_embedding", Mat(c.max_length, d)});
    normal_init(p[kItemEmbedding].value, rng, 0.1);
    normal_init(p[kInteractionEmbedding].value, rng, 0.1);
    normal_init(p[kPositionEmbedding].value, rng, 0.1);
    for (int k = 0; k < c.num_blocks; ++k) {
      const std::string pre = "block" + std::to_string(k) + ".";
      for (const char* name : {"query", "key", "value", "attn_out"}) {
        p.push_back({pre + name + ".weights", Mat(d, d)});
        xavier_uniform(p.back().value, rng, d, d);
        p.push_back({pre + name + ".bias", Mat::Zero(1, d)});
      }
      p.push_back({pre + "norm1.gamma", Mat::Ones(1, d)});
      p.push_back({pre + "norm1.beta", Mat::Zero(1, d)});
      p.push_back({pre + "ffn1.weights", Mat(d, d)});
      xavier_uniform(p.back().value, rng, d, d);
      p.push_back({pre + "ffn1.bias", Mat::Zero(1, d)});
      p.push_back({pre + "ffn2.weights", Mat(d, d)});
      xavier_uniform(p.back().value, rng, d, d);
      p.push_back({pre + "ffn2.bias", Mat::Zero(1, d)});
      p.push_back({pre + "norm2.gamma", Mat::Ones(1, d)});
      p.push_back({pre + "norm2.beta", Mat::Zero(1, d)});
    }
    p.push_back({"output.weights", Mat(d, 1)});
    xavier_uniform(p.back().value, rng, d, 1);
    p.push_back({"output.bias", Mat::Zero(1, 1)});
  }

  std::string architecture() const override { return "sakt"; }
  int num_items() const override { return config_.num_items; }
  const SaktConfig& config() const { return config_; }
  std::size_t context_limit() const { return std::size_t(config_.max_length - 1); }

  nlohmann::json hyperparameters() const override {
    return {{"embedding_size", config_.embedding_size},
            {"num_heads", config_.num_heads},
            {"num_blocks", config_.num_blocks},
            {"max_length", config_.max_length},
            {"dropout", this->dropout_}};
  }

  State init_state() const override { return State{}; }

  // Keeps a sliding context of the last m - 1 steps.
  State advance(State state, int item, Scalar response) const override {
    state.context.push_back({item, response});
    if (state.context.size() > context_limit()) state.context.erase(state.context.begin());
    ++state.observed;
    return state;
  }

  bool has_representation() const override { return true; }

  Vec query_repr(const State& state, int item) const override {
    const auto& ctx = state.context;
    const Eigen::Index c = Eigen::Index(ctx.size());
    const Eigen::Index d = config_.embedding_size;
    Mat x(c, d);
    for (Eigen::Index i = 0; i < c; ++i) {
      const auto& s = ctx[std::size_t(i)];
      x.row(i) = interaction_row(s.item, s.response) + param(kPositionEmbedding).row(i);
    }
    // A single block only needs the target row; deeper stacks need every row.
    const bool single = config_.num_blocks == 1;
    const Eigen::Index offset = single ? c : 0;
    Mat qin(single ? 1 : c + 1, d);
    for (Eigen::Index r = 0; r < qin.rows(); ++r) {
      const Eigen::Index j = offset + r;
      qin.row(r) = param(kItemEmbedding).row(j < c ? ctx[std::size_t(j)].item : item);
    }
    Mat out = run_blocks(qin, x, offset, nullptr, nullptr);
    return out.row(out.rows() - 1).transpose();
  }

  Scalar output_from_repr(const Vec& repr) const override {
    const Scalar z = repr.dot(param(outputWeightsIndex()).col(0)) + param(outputWeightsIndex() + 1)(0, 0);
    return open_unit(sigmoid(z));
  }

  Scalar query(const State& state, int item) const override { return output_from_repr(query_repr(state, item)); }

  LossResult<Scalar> forward_loss(std::span<const Window> batch, Gradients<Scalar>* grad = nullptr,
                                  std::mt19937_64* dropout_rng = nullptr) const override {
    this->check_batch(batch);
    LossResult<Scalar> result;
    result.predictions.resize(batch.size());
    std::size_t targets = 0;
    for (const auto& w : batch) {
      if (w.valid_len > std::size_t(config_.max_length))
        throw Error("sakt: window longer than max_length");
      if (w.valid_len >= 2) targets += w.valid_len - 1;
    }
    result.targets = targets;
    if (targets == 0) return result;

    const Eigen::Index d = config_.embedding_size;
    const std::size_t out_w = outputWeightsIndex();
    for (std::size_t wi = 0; wi < batch.size(); ++wi) {
      const auto& w = batch[wi];
      const Eigen::Index len = Eigen::Index(w.valid_len);
      if (len < 2) continue;
      Mat qin(len, d), x(len, d);
      for (Eigen::Index j = 0; j < len; ++j) {
        const auto& s = w.steps[std::size_t(j)];
        qin.row(j) = param(kItemEmbedding).row(s.item);
        x.row(j) = param(kInteractionEmbedding).row(this->encode(s.item, s.response)) +
                   param(kPositionEmbedding).row(j);
      }
      std::vector<BlockCache> caches(std::size_t(config_.num_blocks));
      Mat out = run_blocks(qin, x, 0, &caches, dropout_rng);
      Vec z = out * param(out_w).col(0);
      z.array() += param(out_w + 1)(0, 0);

      Vec dz = Vec::Zero(len);
      for (Eigen::Index j = 1; j < len; ++j) {
        const Scalar y = Scalar(w.steps[std::size_t(j)].response);
        result.loss += (softplus(z(j)) - y * z(j)) / Scalar(targets);
        const Scalar p = sigmoid(z(j));
        result.predictions[wi].push_back(p);
        dz(j) = (p - y) / Scalar(targets);
      }
      if (!grad) continue;

      auto& g = *grad;
      g[out_w].col(0).noalias() += out.transpose() * dz;
      g[out_w + 1](0, 0) += dz.sum();
      Mat dout = dz * param(out_w).col(0).transpose();
      Mat dqin = Mat::Zero(len, d);
      Mat dx;
      for (std::size_t k = std::size_t(config_.num_blocks); k-- > 0;) {
        Mat dkv;
        block_backward(k, caches[k], dout, dqin, dkv, g);
        if (k == 0) dx = std::move(dkv);
        else dout = std::move(dkv);
      }
      for (Eigen::Index j = 0; j < len; ++j) {
        const auto& s = w.steps[std::size_t(j)];
        g[kItemEmbedding].row(s.item) += dqin.row(j);
        g[kInteractionEmbedding].row(this->encode(s.item, s.response)) += dx.row(j);
        g[kPositionEmbedding].row(j) += dx.row(j);
      }
    }
    return result;
  }

 private:
  static constexpr Scalar kNormEps = Scalar(1e-5);

  struct NormCache {
    Mat xhat;
    Vec inv_std;
  };

  struct BlockCache {
    Mat qin, kv, q, k, v, concat, drop1, n1, h1, relu, drop2;
    std::vector<Mat> weights;  // per-head attention weights
    NormCache norm1, norm2;
    Eigen::Index offset = 0;
    bool strict = true;
  };

  const Mat& param(std::size_t i) const { return this->params_[i].value; }
  const Mat& bparam(std::size_t block, BlockParam p) const { return param(kFirstBlock + block * kParamsPerBlock + p); }
  std::size_t outputWeightsIndex() const { return kFirstBlock + std::size_t(config_.num_blocks) * kParamsPerBlock; }

  RowVec interaction_row(int item, Scalar response) const {
    const auto& e = param(kInteractionEmbedding);
    if (response == Scalar(0) || response == Scalar(1)) return e.row(this->encode(item, int(response)));
    return (Scalar(1) - response) * e.row(this->encode(item, 0)) + response * e.row(this->encode(item, 1));
  }

  Mat run_blocks(const Mat& qin, const Mat& x, Eigen::Index offset, std::vector<BlockCache>* caches,
                 std::mt19937_64* rng) const {
    Mat kv = x;
    for (std::size_t k = 0; k < std::size_t(config_.num_blocks); ++k)
      kv = block_forward(k, qin, kv, offset, k == 0, caches ? &(*caches)[k] : nullptr, rng);
    return kv;
  }

  // Rows of `qin` sit at absolute positions offset, offset+1, ...; key i is
  // visible to row j iff i < j (strict) or i <= j.
  Mat block_forward(std::size_t k, const Mat& qin, const Mat& kv, Eigen::Index offset, bool strict,
                    BlockCache* cache, std::mt19937_64* rng) const {
    const Eigen::Index rows = qin.rows(), keys = kv.rows(), d = config_.embedding_size;
    const Eigen::Index heads = config_.num_heads, dk = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dk));

    Mat q = (qin * bparam(k, kWq)).rowwise() + bparam(k, kBq).row(0);
    Mat kk = (kv * bparam(k, kWk)).rowwise() + bparam(k, kBk).row(0);
    Mat v = (kv * bparam(k, kWv)).rowwise() + bparam(k, kBv).row(0);

    Mat concat = Mat::Zero(rows, d);
    std::vector<Mat> weights(static_cast<std::size_t>(heads));
    for (Eigen::Index h = 0; h < heads; ++h) {
      Mat a = Mat::Zero(rows, keys);
      if (keys > 0) {
        Mat s = scale * q.middleCols(h * dk, dk) * kk.middleCols(h * dk, dk).transpose();
        for (Eigen::Index r = 0; r < rows; ++r) {
          const Eigen::Index j = offset + r;
          const Eigen::Index visible = std::min(keys, strict ? j : j + 1);
          if (visible <= 0) continue;
          auto row = s.row(r).head(visible);
          const Scalar mx = row.maxCoeff();
          RowVec e = (row.array() - mx).exp().matrix();
          a.row(r).head(visible) = e / e.sum();
        }
        concat.middleCols(h * dk, dk) = a * v.middleCols(h * dk, dk);
      }
      weights[std::size_t(h)] = std::move(a);
    }

    Mat attn = (concat * bparam(k, kWo)).rowwise() + bparam(k, kBo).row(0);
    Mat drop1 = this->dropout_mask(rows, d, rng);
    NormCache norm1, norm2;
    Mat n1 = layer_norm(attn.cwiseProduct(drop1) + qin, bparam(k, kLn1G), bparam(k, kLn1B), norm1);
    Mat h1 = (n1 * bparam(k, kW1)).rowwise() + bparam(k, kB1).row(0);
    Mat relu = h1.cwiseMax(Scalar(0));
    Mat f = (relu * bparam(k, kW2)).rowwise() + bparam(k, kB2).row(0);
    Mat drop2 = this->dropout_mask(rows, d, rng);
    Mat out = layer_norm(f.cwiseProduct(drop2) + n1, bparam(k, kLn2G), bparam(k, kLn2B), norm2);

    if (cache) {
      cache->qin = qin;
      cache->kv = kv;
      cache->q = std::move(q);
      cache->k = std::move(kk);
      cache->v = std::move(v);
      cache->concat = std::move(concat);
      cache->drop1 = std::move(drop1);
      cache->n1 = std::move(n1);
      cache->h1 = std::move(h1);
      cache->relu = std::move(relu);
      cache->drop2 = std::move(drop2);
      cache->weights = std::move(weights);
      cache->norm1 = std::move(norm1);
      cache->norm2 = std::move(norm2);
      cache->offset = offset;
      cache->strict = strict;
    }
    return out;
  }

  // Adds d(loss)/d(qin) into dqin and writes d(loss)/d(kv) to dkv.
  void block_backward(std::size_t k, const BlockCache& c, const Mat& dout, Mat& dqin, Mat& dkv,
                      Gradients<Scalar>& g) const {
    const std::size_t base = kFirstBlock + k * kParamsPerBlock;
    const Eigen::Index d = config_.embedding_size, heads = config_.num_heads, dk = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(dk));

    Mat dr2 = layer_norm_backward(dout, c.norm2, bparam(k, kLn2G), g[base + kLn2G], g[base + kLn2B]);
    Mat dn1 = dr2;
    Mat df = dr2.cwiseProduct(c.drop2);
    g[base + kW2].noalias() += c.relu.transpose() * df;
    g[base + kB2] += df.colwise().sum();
    Mat dh1 = (df * bparam(k, kW2).transpose()).cwiseProduct((c.h1.array() > Scalar(0)).template cast<Scalar>().matrix());
    g[base + kW1].noalias() += c.n1.transpose() * dh1;
    g[base + kB1] += dh1.colwise().sum();
    dn1.noalias() += dh1 * bparam(k, kW1).transpose();

    Mat dr1 = layer_norm_backward(dn1, c.norm1, bparam(k, kLn1G), g[base + kLn1G], g[base + kLn1B]);
    dqin += dr1;
    Mat dattn = dr1.cwiseProduct(c.drop1);
    g[base + kWo].noalias() += c.concat.transpose() * dattn;
    g[base + kBo] += dattn.colwise().sum();
    Mat dconcat = dattn * bparam(k, kWo).transpose();

    Mat dq = Mat::Zero(c.q.rows(), d), dkk = Mat::Zero(c.k.rows(), d), dv = Mat::Zero(c.v.rows(), d);
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Mat& a = c.weights[std::size_t(h)];
      if (a.cols() == 0) continue;
      const auto dout_h = dconcat.middleCols(h * dk, dk);
      dv.middleCols(h * dk, dk).noalias() += a.transpose() * dout_h;
      Mat da = dout_h * c.v.middleCols(h * dk, dk).transpose();
      Vec rowdot = (da.cwiseProduct(a)).rowwise().sum();
      Mat ds = a.cwiseProduct(da.colwise() - rowdot);
      dq.middleCols(h * dk, dk).noalias() += scale * ds * c.k.middleCols(h * dk, dk);
      dkk.middleCols(h * dk, dk).noalias() += scale * ds.transpose() * c.q.middleCols(h * dk, dk);
    }

    g[base + kWq].noalias() += c.qin.transpose() * dq;
    g[base + kBq] += dq.colwise().sum();
    dqin.noalias() += dq * bparam(k, kWq).transpose();
    g[base + kWk].noalias() += c.kv.transpose() * dkk;
    g[base + kBk] += dkk.colwise().sum();
    g[base + kWv].noalias() += c.kv.transpose() * dv;
    g[base + kBv] += dv.colwise().sum();
    dkv = dkk * bparam(k, kWk).transpose() + dv * bparam(k, kWv).transpose();
  }

  static Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, NormCache& cache) {
    const Scalar cols = Scalar(x.cols());
    Vec mean = x.rowwise().sum() / cols;
    Mat centered = x.colwise() - mean;
    Vec var = centered.array().square().rowwise().sum() / cols;
    cache.inv_std = (var.array() + kNormEps).rsqrt().matrix();
    cache.xhat = cache.inv_std.asDiagonal() * centered;
    return (cache.xhat.array().rowwise() * gamma.row(0).array()).matrix().rowwise() + beta.row(0);
  }

  static Mat layer_norm_backward(const Mat& dy, const NormCache& cache, const Mat& gamma, Mat& dgamma, Mat& dbeta) {
    dgamma += dy.cwiseProduct(cache.xhat).colwise().sum();
    dbeta += dy.colwise().sum();
    const Scalar cols = Scalar(dy.cols());
    Mat dxhat = (dy.array().rowwise() * gamma.row(0).array()).matrix();
    Vec mean_dxhat = dxhat.rowwise().sum() / cols;
    Vec mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).rowwise().sum() / cols;
    Mat dx = dxhat.colwise() - mean_dxhat;
    dx -= cache.xhat.cwiseProduct(mean_dxhat_xhat.replicate(1, dy.cols()));
    return cache.inv_std.asDiagonal() * dx;
  }

  SaktConfig config_;
};

}  // namespace ktbench
