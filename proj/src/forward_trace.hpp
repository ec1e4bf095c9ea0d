#pragma once

// Activations recorded during a forward pass, consumed by the trainer's
// backward pass. Private to the library.

#include <span>
#include <vector>

#include "lmscore/model.hpp"

namespace lmscore::detail {

struct LayerNormTrace {
  Matrix normalized;  // (x - mean) * inv_std
  Vector inv_std;     // per row
};

struct LayerTrace {
  Matrix input;  // residual stream entering the block
  LayerNormTrace ln1;
  Matrix ln1_out;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, [T x T], zero where masked
  Matrix context;             // concatenated head outputs
  Matrix mid;                 // residual stream after attention
  LayerNormTrace ln2;
  Matrix ln2_out;
  Matrix ffn_pre;  // [T x d_ff], before GELU
  Matrix ffn_act;
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  LayerNormTrace final_ln;
  Matrix final_out;
};

inline constexpr double kLayerNormEps = 1e-5;

ForwardOutput forward_impl(const Model& model, std::span<const TokenId> ids, ForwardTrace* trace);

double gelu(double x);
double gelu_grad(double x);

}  // namespace lmscore::detail
