#pragma once

// Reference computations written independently of the library: long double
// arithmetic, dense loops, explicit -inf masking. Slow by design.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "lmscore/model.hpp"

namespace oracle {

using Real = long double;
using Mat = std::vector<std::vector<Real>>;

inline Mat from(const lmscore::Matrix& m) {
  Mat out(m.rows, std::vector<Real>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out[r][c] = m(r, c);
  return out;
}

inline Mat matmul(const Mat& x, const lmscore::Matrix& w, const lmscore::Vector& b) {
  Mat out(x.size(), std::vector<Real>(w.cols));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.cols; ++j) {
      Real s = b[j];
      for (std::size_t k = 0; k < w.rows; ++k) s += x[i][k] * static_cast<Real>(w(k, j));
      out[i][j] = s;
    }
  return out;
}

inline Mat layer_norm(const Mat& x, const lmscore::Vector& g, const lmscore::Vector& b) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real n = static_cast<Real>(x[i].size());
    const Real mu = std::accumulate(x[i].begin(), x[i].end(), Real{0}) / n;
    Real var = 0;
    for (const Real v : x[i]) var += (v - mu) * (v - mu);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j) out[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5L) * g[j] + b[j];
  }
  return out;
}

inline std::vector<Real> softmax(std::vector<Real> row) {
  const Real mx = *std::max_element(row.begin(), row.end());
  Real z = 0;
  for (Real& v : row) z += (v = std::exp(v - mx));
  for (Real& v : row) v /= z;
  return row;
}

inline std::vector<Real> log_softmax(const std::vector<Real>& row) {
  const Real mx = *std::max_element(row.begin(), row.end());
  Real z = 0;
  for (const Real v : row) z += std::exp(v - mx);
  std::vector<Real> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - mx - std::log(z);
  return out;
}

inline std::vector<Real> log_softmax(std::span<const double> row) {
  return log_softmax(std::vector<Real>(row.begin(), row.end()));
}

struct Forward {
  Mat logits;
  std::vector<Mat> hidden;
};

inline Forward forward(const lmscore::Model& model, const std::vector<lmscore::TokenId>& ids) {
  const auto& c = model.config;
  const auto& w = model.weights;
  const std::size_t n = ids.size(), d = c.d_model, dh = d / c.n_heads;
  const Real ninf = -std::numeric_limits<Real>::infinity();
  Forward f;
  Mat h(n, std::vector<Real>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      h[i][j] = static_cast<Real>(w.token_embedding(ids[i], j)) + w.position_embedding(i, j);
  f.hidden.push_back(h);
  for (const auto& L : w.layers) {
    const Mat a = layer_norm(h, L.ln1_gain, L.ln1_bias);
    const Mat q = matmul(a, L.q_weight, L.q_bias), k = matmul(a, L.k_weight, L.k_bias),
              v = matmul(a, L.v_weight, L.v_bias);
    Mat ctx(n, std::vector<Real>(d, 0));
    for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<Real> s(n);
        for (std::size_t j = 0; j < n; ++j) {
          Real dot = 0;
          for (std::size_t e = hd * dh; e < (hd + 1) * dh; ++e) dot += q[i][e] * k[j][e];
          const bool blocked = c.architecture == lmscore::Architecture::causal && j > i;
          s[j] = blocked ? ninf : dot / std::sqrt(static_cast<Real>(dh));
        }
        const auto p = softmax(s);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t e = hd * dh; e < (hd + 1) * dh; ++e) ctx[i][e] += p[j] * v[j][e];
      }
    }
    const Mat o = matmul(ctx, L.o_weight, L.o_bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i][j] += o[i][j];
    Mat u = matmul(layer_norm(h, L.ln2_gain, L.ln2_bias), L.ffn_in_weight, L.ffn_in_bias);
    for (auto& row : u)
      for (Real& x : row) x = 0.5L * x * (1 + std::erf(x / std::sqrt(2.0L)));
    const Mat ff = matmul(u, L.ffn_out_weight, L.ffn_out_bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i][j] += ff[i][j];
    f.hidden.push_back(h);
  }
  f.logits = matmul(layer_norm(h, w.final_gain, w.final_bias), w.lm_head, w.lm_head_bias);
  return f;
}

// Competition rank by linear count.
inline std::size_t rank_of(const std::vector<double>& probs, std::size_t idx) {
  std::size_t r = 1;
  for (const double p : probs) r += p > probs[idx] ? 1 : 0;
  return r;
}

// Full stable sort: probability descending, id ascending.
inline std::vector<std::size_t> sorted_ids(const std::vector<double>& probs) {
  std::vector<std::size_t> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return ids;
}

}  // namespace oracle
