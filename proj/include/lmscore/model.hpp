#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmscore/tensor.hpp"
#include "lmscore/tokenizer.hpp"

namespace lmscore {

enum class Architecture { causal, bidirectional };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view tag);

struct ModelConfig {
  Architecture architecture = Architecture::causal;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 16;
  std::size_t d_ff = 64;
  std::size_t vocab_size = 32;
  std::size_t max_seq_len = 32;

  // Throws ConfigError on non-positive sizes or d_model % n_heads != 0.
  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  Vector ln1_gain, ln1_bias;
  Matrix q_weight, k_weight, v_weight, o_weight;  // [d_model x d_model]
  Vector q_bias, k_bias, v_bias, o_bias;
  Vector ln2_gain, ln2_bias;
  Matrix ffn_in_weight;  // [d_model x d_ff]
  Vector ffn_in_bias;
  Matrix ffn_out_weight;  // [d_ff x d_model]
  Vector ffn_out_bias;
};

// Parameters of a pre-layer-norm transformer. Projections multiply row
// vectors on the left: y = x W + b.
struct ModelWeights {
  Matrix token_embedding;     // [V x d_model]
  Matrix position_embedding;  // [max_seq_len x d_model]
  std::vector<LayerWeights> layers;
  Vector final_gain, final_bias;
  Matrix lm_head;  // [d_model x V]
  Vector lm_head_bias;

  // Zero-filled weights with the shapes implied by `config`.
  static ModelWeights zeros(const ModelConfig& config);
};

// One named parameter tensor. Vectors have a single-element shape.
struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> values;
};

struct ConstTensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<const double> values;
};

// Canonical tensor order used by the weight file and the optimizer.
std::vector<TensorRef> named_tensors(ModelWeights& weights);
std::vector<ConstTensorRef> named_tensors(const ModelWeights& weights);

// Expected (name, shape) manifest for a config, in canonical order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_manifest(const ModelConfig& config);

struct ForwardOutput {
  Matrix logits;                      // [seq_len x V]
  std::vector<Matrix> hidden_states;  // n_layers + 1 entries of [seq_len x d_model]
};

struct Model {
  ModelConfig config;
  ModelWeights weights;
};

// Pre-LN blocks with GELU feed-forward; causal models mask attention to
// j <= i. hidden_states[0] is token + position embedding, hidden_states[l]
// the output of block l.
ForwardOutput forward(const Model& model, std::span<const TokenId> ids);

// Independent forward passes, optionally spread over `workers` threads.
// Output order matches input order; results equal forward() bitwise.
std::vector<ForwardOutput> forward_batch(const Model& model,
                                         const std::vector<std::vector<TokenId>>& batch,
                                         std::size_t workers = 1);

// Numerically stable log-softmax. Throws NumericError on non-finite input.
Vector log_probs(std::span<const double> logits_row);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// A model together with its vocabulary; the unit every scoring and
// extraction operation consumes.
struct LanguageModel {
  Vocabulary vocab;
  Model model;

  Architecture architecture() const { return model.config.architecture; }
};

}  // namespace lmscore
