#include "lmscore/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "forward_trace.hpp"
#include "lmscore/errors.hpp"

namespace lmscore {

std::string_view to_string(Architecture arch) {
  return arch == Architecture::causal ? "causal" : "bidirectional";
}

Architecture parse_architecture(std::string_view tag) {
  if (tag == "causal") return Architecture::causal;
  if (tag == "bidirectional") return Architecture::bidirectional;
  throw ConfigError("unknown architecture tag '" + std::string(tag) + "'");
}

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> sizes[] = {
      {"n_layers", n_layers}, {"n_heads", n_heads},       {"d_model", d_model},
      {"d_ff", d_ff},         {"vocab_size", vocab_size}, {"max_seq_len", max_seq_len}};
  for (const auto& [name, value] : sizes) {
    if (value == 0) throw ConfigError(std::string(name) + " must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") is not divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
}

ModelWeights ModelWeights::zeros(const ModelConfig& c) {
  c.validate();
  ModelWeights w;
  const std::size_t d = c.d_model;
  w.token_embedding = Matrix(c.vocab_size, d);
  w.position_embedding = Matrix(c.max_seq_len, d);
  w.layers.resize(c.n_layers);
  for (auto& l : w.layers) {
    l.ln1_gain = l.ln1_bias = Vector(d, 0.0);
    l.q_weight = l.k_weight = l.v_weight = l.o_weight = Matrix(d, d);
    l.q_bias = l.k_bias = l.v_bias = l.o_bias = Vector(d, 0.0);
    l.ln2_gain = l.ln2_bias = Vector(d, 0.0);
    l.ffn_in_weight = Matrix(d, c.d_ff);
    l.ffn_in_bias = Vector(c.d_ff, 0.0);
    l.ffn_out_weight = Matrix(c.d_ff, d);
    l.ffn_out_bias = Vector(d, 0.0);
  }
  w.final_gain = w.final_bias = Vector(d, 0.0);
  w.lm_head = Matrix(d, c.vocab_size);
  w.lm_head_bias = Vector(c.vocab_size, 0.0);
  return w;
}

namespace {

template <typename Ref, typename Weights>
std::vector<Ref> collect(Weights& w) {
  std::vector<Ref> out;
  auto mat = [&](std::string name, auto& m) {
    out.push_back(Ref{std::move(name), {m.rows, m.cols}, {m.data.data(), m.data.size()}});
  };
  auto vec = [&](std::string name, auto& v) {
    out.push_back(Ref{std::move(name), {v.size()}, {v.data(), v.size()}});
  };
  mat("token_embedding", w.token_embedding);
  mat("position_embedding", w.position_embedding);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    vec(p + "ln1.gain", l.ln1_gain);
    vec(p + "ln1.bias", l.ln1_bias);
    mat(p + "attn.q.weight", l.q_weight);
    vec(p + "attn.q.bias", l.q_bias);
    mat(p + "attn.k.weight", l.k_weight);
    vec(p + "attn.k.bias", l.k_bias);
    mat(p + "attn.v.weight", l.v_weight);
    vec(p + "attn.v.bias", l.v_bias);
    mat(p + "attn.o.weight", l.o_weight);
    vec(p + "attn.o.bias", l.o_bias);
    vec(p + "ln2.gain", l.ln2_gain);
    vec(p + "ln2.bias", l.ln2_bias);
    mat(p + "ffn.in.weight", l.ffn_in_weight);
    vec(p + "ffn.in.bias", l.ffn_in_bias);
    mat(p + "ffn.out.weight", l.ffn_out_weight);
    vec(p + "ffn.out.bias", l.ffn_out_bias);
  }
  vec("final_ln.gain", w.final_gain);
  vec("final_ln.bias", w.final_bias);
  mat("lm_head.weight", w.lm_head);
  vec("lm_head.bias", w.lm_head_bias);
  return out;
}

}  // namespace

std::vector<TensorRef> named_tensors(ModelWeights& weights) { return collect<TensorRef>(weights); }

std::vector<ConstTensorRef> named_tensors(const ModelWeights& weights) {
  return collect<ConstTensorRef>(weights);
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_manifest(const ModelConfig& config) {
  const ModelWeights shapes = ModelWeights::zeros(config);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  for (const auto& t : named_tensors(shapes)) out.emplace_back(t.name, t.shape);
  return out;
}

namespace detail {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

namespace {

// out = x W + b, accumulating over the inner dimension in ascending order.
Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix out(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto o = out.row(i);
    std::copy(b.begin(), b.end(), o.begin());
    const auto xi = x.row(i);
    for (std::size_t k = 0; k < w.rows; ++k) {
      const double xk = xi[k];
      const auto wk = w.row(k);
      for (std::size_t j = 0; j < w.cols; ++j) o[j] += xk * wk[j];
    }
  }
  return out;
}

Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, LayerNormTrace* trace) {
  Matrix out(x.rows, x.cols);
  if (trace) {
    trace->normalized = Matrix(x.rows, x.cols);
    trace->inv_std.assign(x.rows, 0.0);
  }
  const double n = static_cast<double>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto xi = x.row(i);
    double mean = 0.0;
    for (const double v : xi) mean += v;
    mean /= n;
    double var = 0.0;
    for (const double v : xi) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double hat = (xi[j] - mean) * inv;
      out(i, j) = hat * gain[j] + bias[j];
      if (trace) trace->normalized(i, j) = hat;
    }
    if (trace) trace->inv_std[i] = inv;
  }
  return out;
}

void check_ids(const Model& model, std::span<const TokenId> ids) {
  const auto& c = model.config;
  if (ids.empty()) throw InputError("forward requires at least one token");
  if (ids.size() > c.max_seq_len) {
    throw InputError("sequence of length " + std::to_string(ids.size()) + " exceeds max_seq_len " +
                     std::to_string(c.max_seq_len));
  }
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                       std::to_string(c.vocab_size));
    }
  }
}

}  // namespace

ForwardOutput forward_impl(const Model& model, std::span<const TokenId> ids, ForwardTrace* trace) {
  check_ids(model, ids);
  const auto& c = model.config;
  const auto& w = model.weights;
  const std::size_t t_len = ids.size();
  const std::size_t d = c.d_model;
  const std::size_t heads = c.n_heads;
  const std::size_t dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool causal = c.architecture == Architecture::causal;

  ForwardOutput out;
  out.hidden_states.reserve(c.n_layers + 1);
  if (trace) trace->layers.resize(c.n_layers);

  Matrix h(t_len, d);
  for (std::size_t i = 0; i < t_len; ++i) {
    const auto tok = w.token_embedding.row(static_cast<std::size_t>(ids[i]));
    const auto pos = w.position_embedding.row(i);
    for (std::size_t j = 0; j < d; ++j) h(i, j) = tok[j] + pos[j];
  }
  out.hidden_states.push_back(h);

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerTrace* lt = trace ? &trace->layers[l] : nullptr;
    if (lt) lt->input = h;

    Matrix a = layer_norm(h, lw.ln1_gain, lw.ln1_bias, lt ? &lt->ln1 : nullptr);
    Matrix q = affine(a, lw.q_weight, lw.q_bias);
    Matrix k = affine(a, lw.k_weight, lw.k_bias);
    Matrix v = affine(a, lw.v_weight, lw.v_bias);

    Matrix ctx(t_len, d);
    if (lt) lt->probs.assign(heads, Matrix(t_len, t_len));
    Vector scores(t_len);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * dh;
      for (std::size_t i = 0; i < t_len; ++i) {
        const std::size_t limit = causal ? i + 1 : t_len;
        double max_s = -INFINITY;
        for (std::size_t j = 0; j < limit; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += q(i, off + e) * k(j, off + e);
          scores[j] = s * scale;
          max_s = std::max(max_s, scores[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < limit; ++j) {
          scores[j] = std::exp(scores[j] - max_s);
          denom += scores[j];
        }
        for (std::size_t j = 0; j < limit; ++j) {
          const double p = scores[j] / denom;
          if (lt) lt->probs[hd](i, j) = p;
          for (std::size_t e = 0; e < dh; ++e) ctx(i, off + e) += p * v(j, off + e);
        }
      }
    }
    Matrix attn = affine(ctx, lw.o_weight, lw.o_bias);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += attn.data[i];
    if (lt) {
      lt->ln1_out = std::move(a);
      lt->q = std::move(q);
      lt->k = std::move(k);
      lt->v = std::move(v);
      lt->context = ctx;
      lt->mid = h;
    }

    Matrix b = layer_norm(h, lw.ln2_gain, lw.ln2_bias, lt ? &lt->ln2 : nullptr);
    Matrix u = affine(b, lw.ffn_in_weight, lw.ffn_in_bias);
    Matrix g(u.rows, u.cols);
    for (std::size_t i = 0; i < u.data.size(); ++i) g.data[i] = gelu(u.data[i]);
    Matrix f = affine(g, lw.ffn_out_weight, lw.ffn_out_bias);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += f.data[i];
    if (lt) {
      lt->ln2_out = std::move(b);
      lt->ffn_pre = std::move(u);
      lt->ffn_act = std::move(g);
    }
    out.hidden_states.push_back(h);
  }

  Matrix final_out = layer_norm(h, w.final_gain, w.final_bias, trace ? &trace->final_ln : nullptr);
  out.logits = affine(final_out, w.lm_head, w.lm_head_bias);
  if (trace) trace->final_out = std::move(final_out);
  return out;
}

}  // namespace detail

ForwardOutput forward(const Model& model, std::span<const TokenId> ids) {
  return detail::forward_impl(model, ids, nullptr);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const std::size_t count = std::min(workers, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::vector<ForwardOutput> forward_batch(const Model& model,
                                         const std::vector<std::vector<TokenId>>& batch,
                                         std::size_t workers) {
  std::vector<ForwardOutput> out(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) { out[i] = forward(model, batch[i]); });
  return out;
}

Vector log_probs(std::span<const double> row) {
  if (row.empty()) throw InputError("log_probs of an empty row");
  double max_v = -INFINITY;
  for (const double v : row) {
    if (!std::isfinite(v)) throw NumericError("non-finite logit");
    max_v = std::max(max_v, v);
  }
  double sum = 0.0;
  for (const double v : row) sum += std::exp(v - max_v);
  const double log_z = max_v + std::log(sum);
  Vector out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = std::min(0.0, row[i] - log_z);
  return out;
}

}  // namespace lmscore
