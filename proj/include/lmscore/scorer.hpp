#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lmscore/model.hpp"

namespace lmscore {

enum class ScoreMode { logprob, surprisal };
enum class SequenceReduction { sum, mean };

struct TokenScore {
  std::string token;
  // Natural log. The first token of a causal sentence has no conditioning
  // context; it carries 0.0 and `placeholder` is set.
  double logprob = 0.0;
  std::optional<double> surprisal;  // bits
  std::optional<std::size_t> rank;  // 1-based competition rank in the full distribution
  bool placeholder = false;
};

struct SequenceScore {
  double value = 0.0;
  SequenceReduction reduction = SequenceReduction::sum;
  std::size_t n_scored_tokens = 0;
};

struct ScoringRequest {
  std::vector<std::string> sentences;
  ScoreMode mode = ScoreMode::logprob;
  bool want_rank = false;
  SequenceReduction reduction = SequenceReduction::sum;
};

struct Prediction {
  std::string token;
  double probability = 0.0;
};

struct VocabQuery {
  std::string token;
  double probability = 0.0;
  std::size_t rank = 0;
};

struct ScorerOptions {
  // Wrap every sentence in bos ... eos before scoring.
  bool add_special = true;
  // Threads used for independent forward passes; 1 runs inline.
  std::size_t workers = 1;
};

// Token, sequence and partial scoring for both model classes. Causal models
// score each token from the prefix before it (one forward pass per
// sentence); bidirectional models score each token with its own position
// masked (one forward pass per position, the pseudo-log-likelihood).
class Scorer {
 public:
  explicit Scorer(const LanguageModel& lm, ScorerOptions options = {});

  std::vector<std::vector<TokenScore>> token_score(const ScoringRequest& request) const;
  std::vector<SequenceScore> sequence_score(const ScoringRequest& request) const;

  // Scores only the continuation tokens conditioned on the prefix. Prefix
  // and continuation are encoded separately and their ids concatenated.
  std::vector<SequenceScore> partial_score(const std::vector<std::string>& prefixes,
                                           const std::vector<std::string>& continuations,
                                           SequenceReduction reduction) const;

  // Top-k tokens at the single mask position, probability descending, ties
  // by ascending id.
  std::vector<std::vector<Prediction>> get_predictions(const std::vector<std::string>& stimuli,
                                                       std::size_t k) const;

  std::vector<std::vector<VocabQuery>> query_vocab(const std::vector<std::string>& stimuli,
                                                   const std::vector<std::string>& restricted_vocab) const;

  // Log-probabilities of the distribution that predicts the mask in
  // `stimulus`.
  Vector mask_distribution(const std::string& stimulus) const;

  const LanguageModel& model() const { return lm_; }
  const ScorerOptions& options() const { return options_; }

 private:
  Encoding encode_checked(const std::string& text) const;

  const LanguageModel& lm_;
  ScorerOptions options_;
};

// Fills surprisal = -logprob / ln 2 for every entry; placeholders get 0.
void to_surprisal(std::vector<std::vector<TokenScore>>& scores);
double surprisal_bits(double logprob);

// 1 + number of entries strictly greater than values[index].
std::size_t competition_rank(std::span<const double> values, std::size_t index);

}  // namespace lmscore
