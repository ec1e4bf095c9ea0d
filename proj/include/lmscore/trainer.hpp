#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmscore/model.hpp"

namespace lmscore {

struct TrainOptions {
  std::size_t steps = 1000;
  double lr = 1e-2;
  std::size_t batch_size = 16;
  std::uint64_t seed = 42;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
};

struct TrainStats {
  std::vector<double> step_losses;  // mean per-token cross-entropy of each minibatch
  double initial_loss = 0.0;        // corpus loss before training
  double final_loss = 0.0;          // corpus loss after training
};

// Cross-entropy of predicting targets[i] from logits row rows[i], summed and
// multiplied by `scale`. When `grad` is non-null the gradient of that value
// is added into it.
double loss_and_gradient(const Model& model, std::span<const TokenId> ids, const std::vector<std::size_t>& rows,
                         const std::vector<TokenId>& targets, double scale, ModelWeights* grad);

// Per-token mean cross-entropy of the corpus: next-token prediction for
// causal models, one-position-masked prediction (every position) for
// bidirectional ones.
double corpus_loss(const LanguageModel& lm, const std::vector<std::string>& corpus);

// Adam on minibatches sampled from `corpus` (each sentence wrapped in bos/eos).
// Single-threaded and bit-reproducible for fixed (weights, corpus, options).
TrainStats train(LanguageModel& lm, const std::vector<std::string>& corpus, const TrainOptions& options);

}  // namespace lmscore
