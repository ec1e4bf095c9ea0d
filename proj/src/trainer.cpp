#include "lmscore/trainer.hpp"

#include <cmath>

#include "forward_trace.hpp"
#include "lmscore/errors.hpp"
#include "lmscore/random.hpp"

namespace lmscore {

namespace {

using detail::ForwardTrace;
using detail::LayerNormTrace;

// grad += a^T b
void add_at_b(Matrix& grad, const Matrix& a, const Matrix& b) {
  for (std::size_t r = 0; r < a.rows; ++r) {
    const auto ar = a.row(r);
    const auto br = b.row(r);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double x = ar[i];
      if (x == 0.0) continue;
      auto g = grad.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) g[j] += x * br[j];
    }
  }
}

void add_col_sums(Vector& grad, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    for (std::size_t j = 0; j < m.cols; ++j) grad[j] += row[j];
  }
}

// a W^T
Matrix mul_bt(const Matrix& a, const Matrix& w) {
  Matrix out(a.rows, w.rows);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const auto ar = a.row(r);
    auto o = out.row(r);
    for (std::size_t i = 0; i < w.rows; ++i) {
      const auto wi = w.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < w.cols; ++j) s += ar[j] * wi[j];
      o[i] = s;
    }
  }
  return out;
}

void accumulate(Matrix& into, const Matrix& m) {
  for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += m.data[i];
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormTrace& t, const Vector& gain, Vector& dgain,
                           Vector& dbias) {
  const std::size_t n = dy.cols;
  Matrix dx(dy.rows, n);
  Vector dhat(n);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const auto dyr = dy.row(r);
    const auto hat = t.normalized.row(r);
    double sum_dhat = 0.0;
    double sum_dhat_hat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dgain[j] += dyr[j] * hat[j];
      dbias[j] += dyr[j];
      dhat[j] = dyr[j] * gain[j];
      sum_dhat += dhat[j];
      sum_dhat_hat += dhat[j] * hat[j];
    }
    const double scale = t.inv_std[r] / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      dx(r, j) = scale * (static_cast<double>(n) * dhat[j] - sum_dhat - hat[j] * sum_dhat_hat);
    }
  }
  return dx;
}

void backward(const Model& model, std::span<const TokenId> ids, const ForwardTrace& trace, const Matrix& dlogits,
              ModelWeights& g) {
  const auto& c = model.config;
  const auto& w = model.weights;
  const std::size_t t_len = ids.size();
  const std::size_t dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  add_at_b(g.lm_head, trace.final_out, dlogits);
  add_col_sums(g.lm_head_bias, dlogits);
  Matrix dh_mat = layer_norm_backward(mul_bt(dlogits, w.lm_head), trace.final_ln, w.final_gain, g.final_gain,
                                      g.final_bias);

  for (std::size_t l = c.n_layers; l-- > 0;) {
    const LayerWeights& lw = w.layers[l];
    LayerWeights& lg = g.layers[l];
    const auto& lt = trace.layers[l];

    // Feed-forward branch.
    add_at_b(lg.ffn_out_weight, lt.ffn_act, dh_mat);
    add_col_sums(lg.ffn_out_bias, dh_mat);
    Matrix du = mul_bt(dh_mat, lw.ffn_out_weight);
    for (std::size_t i = 0; i < du.data.size(); ++i) du.data[i] *= detail::gelu_grad(lt.ffn_pre.data[i]);
    add_at_b(lg.ffn_in_weight, lt.ln2_out, du);
    add_col_sums(lg.ffn_in_bias, du);
    Matrix dmid = layer_norm_backward(mul_bt(du, lw.ffn_in_weight), lt.ln2, lw.ln2_gain, lg.ln2_gain, lg.ln2_bias);
    accumulate(dmid, dh_mat);

    // Attention branch.
    add_at_b(lg.o_weight, lt.context, dmid);
    add_col_sums(lg.o_bias, dmid);
    const Matrix dctx = mul_bt(dmid, lw.o_weight);
    Matrix dq(t_len, c.d_model), dk(t_len, c.d_model), dv(t_len, c.d_model);
    Vector dp(t_len);
    for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
      const std::size_t off = hd * dh;
      const Matrix& p = lt.probs[hd];
      for (std::size_t i = 0; i < t_len; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < t_len; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += dctx(i, off + e) * lt.v(j, off + e);
          dp[j] = s;
          dot += p(i, j) * s;
          for (std::size_t e = 0; e < dh; ++e) dv(j, off + e) += p(i, j) * dctx(i, off + e);
        }
        for (std::size_t j = 0; j < t_len; ++j) {
          const double ds = p(i, j) * (dp[j] - dot) * scale;
          if (ds == 0.0) continue;
          for (std::size_t e = 0; e < dh; ++e) {
            dq(i, off + e) += ds * lt.k(j, off + e);
            dk(j, off + e) += ds * lt.q(i, off + e);
          }
        }
      }
    }
    add_at_b(lg.q_weight, lt.ln1_out, dq);
    add_col_sums(lg.q_bias, dq);
    add_at_b(lg.k_weight, lt.ln1_out, dk);
    add_col_sums(lg.k_bias, dk);
    add_at_b(lg.v_weight, lt.ln1_out, dv);
    add_col_sums(lg.v_bias, dv);
    Matrix da = mul_bt(dq, lw.q_weight);
    accumulate(da, mul_bt(dk, lw.k_weight));
    accumulate(da, mul_bt(dv, lw.v_weight));
    dh_mat = layer_norm_backward(da, lt.ln1, lw.ln1_gain, lg.ln1_gain, lg.ln1_bias);
    accumulate(dh_mat, dmid);
  }

  for (std::size_t i = 0; i < t_len; ++i) {
    auto tok = g.token_embedding.row(static_cast<std::size_t>(ids[i]));
    auto pos = g.position_embedding.row(i);
    const auto d = dh_mat.row(i);
    for (std::size_t j = 0; j < c.d_model; ++j) {
      tok[j] += d[j];
      pos[j] += d[j];
    }
  }
}

}  // namespace

double loss_and_gradient(const Model& model, std::span<const TokenId> ids, const std::vector<std::size_t>& rows,
                         const std::vector<TokenId>& targets, double scale, ModelWeights* grad) {
  if (rows.size() != targets.size()) throw InputError("rows and targets differ in length");
  ForwardTrace trace;
  const ForwardOutput out = detail::forward_impl(model, ids, grad ? &trace : nullptr);
  Matrix dlogits(out.logits.rows, out.logits.cols);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector lp = log_probs(out.logits.row(rows[i]));
    const auto target = static_cast<std::size_t>(targets[i]);
    loss -= lp[target];
    if (grad) {
      auto d = dlogits.row(rows[i]);
      for (std::size_t v = 0; v < lp.size(); ++v) d[v] += scale * std::exp(lp[v]);
      d[target] -= scale;
    }
  }
  if (grad) backward(model, ids, trace, dlogits, *grad);
  return scale * loss;
}

namespace {

struct Example {
  std::vector<TokenId> ids;
  std::vector<std::size_t> rows;
  std::vector<TokenId> targets;
};

std::vector<TokenId> encode_sentence(const LanguageModel& lm, const std::string& s) {
  Encoding enc = encode(lm.vocab, s, true);
  if (enc.size() > lm.model.config.max_seq_len) {
    throw InputError("training sentence '" + s + "' exceeds max_seq_len");
  }
  return enc.ids;
}

// Causal: predict every next token. Bidirectional: mask `masked` (a content
// position) and predict it.
Example make_example(const LanguageModel& lm, const std::vector<TokenId>& ids, std::size_t masked) {
  Example ex;
  ex.ids = ids;
  if (lm.architecture() == Architecture::causal) {
    for (std::size_t p = 1; p < ids.size(); ++p) {
      ex.rows.push_back(p - 1);
      ex.targets.push_back(ids[p]);
    }
  } else {
    ex.ids[masked] = lm.vocab.special().mask;
    ex.rows.push_back(masked);
    ex.targets.push_back(ids[masked]);
  }
  return ex;
}

std::vector<std::size_t> content_positions(const LanguageModel& lm, const std::vector<TokenId>& ids) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (!lm.vocab.is_structural(ids[p])) out.push_back(p);
  }
  return out;
}

}  // namespace

double corpus_loss(const LanguageModel& lm, const std::vector<std::string>& corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : corpus) {
    const auto ids = encode_sentence(lm, s);
    if (lm.architecture() == Architecture::causal) {
      const Example ex = make_example(lm, ids, 0);
      total += loss_and_gradient(lm.model, ex.ids, ex.rows, ex.targets, 1.0, nullptr);
      count += ex.rows.size();
    } else {
      for (const std::size_t p : content_positions(lm, ids)) {
        const Example ex = make_example(lm, ids, p);
        total += loss_and_gradient(lm.model, ex.ids, ex.rows, ex.targets, 1.0, nullptr);
        ++count;
      }
    }
  }
  if (count == 0) throw InputError("corpus has no trainable tokens");
  return total / static_cast<double>(count);
}

TrainStats train(LanguageModel& lm, const std::vector<std::string>& corpus, const TrainOptions& options) {
  if (corpus.empty()) throw InputError("training corpus is empty");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(options.lr > 0.0)) throw ConfigError("learning rate must be positive");

  std::vector<std::vector<TokenId>> encoded;
  for (const auto& s : corpus) encoded.push_back(encode_sentence(lm, s));

  TrainStats stats;
  stats.initial_loss = corpus_loss(lm, corpus);

  Rng rng(options.seed);
  const ModelConfig& config = lm.model.config;
  ModelWeights m1 = ModelWeights::zeros(config);
  ModelWeights m2 = ModelWeights::zeros(config);
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  for (std::size_t step = 1; step <= options.steps; ++step) {
    std::vector<Example> batch;
    std::size_t n_targets = 0;
    for (std::size_t b = 0; b < options.batch_size; ++b) {
      const auto& ids = encoded[rng.uniform_index(encoded.size())];
      std::size_t masked = 0;
      if (config.architecture == Architecture::bidirectional) {
        const auto pos = content_positions(lm, ids);
        masked = pos[rng.uniform_index(pos.size())];
      }
      batch.push_back(make_example(lm, ids, masked));
      n_targets += batch.back().rows.size();
    }
    ModelWeights grad = ModelWeights::zeros(config);
    const double scale = 1.0 / static_cast<double>(n_targets);
    double loss = 0.0;
    for (const auto& ex : batch) loss += loss_and_gradient(lm.model, ex.ids, ex.rows, ex.targets, scale, &grad);
    stats.step_losses.push_back(loss);

    auto g = named_tensors(grad);
    if (options.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& t : g) {
        for (const double v : t.values) sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm > options.clip_norm) {
        const double k = options.clip_norm / norm;
        for (auto& t : g) {
          for (double& v : t.values) v *= k;
        }
      }
    }
    auto p = named_tensors(lm.model.weights);
    auto mm = named_tensors(m1);
    auto vv = named_tensors(m2);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t t = 0; t < p.size(); ++t) {
      for (std::size_t i = 0; i < p[t].values.size(); ++i) {
        const double gi = g[t].values[i];
        double& m = mm[t].values[i];
        double& v = vv[t].values[i];
        m = beta1 * m + (1.0 - beta1) * gi;
        v = beta2 * v + (1.0 - beta2) * gi * gi;
        p[t].values[i] -= options.lr * (m / c1) / (std::sqrt(v / c2) + eps);
      }
    }
  }
  stats.final_loss = corpus_loss(lm, corpus);
  return stats;
}

}  // namespace lmscore
