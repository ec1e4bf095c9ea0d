#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lmscore/eval.hpp"
#include "lmscore/model.hpp"

namespace lmscore {

// Deterministic fixture vocabulary of exactly `size` tokens: the five
// specials at ids 0..4, then a fixed English word list (which includes the
// agreement-grammar lexicon and a few "##" pieces), then filler tokens
// "w<k>". Throws ConfigError when size < 6.
Vocabulary fixture_vocabulary(std::size_t size);

enum class FixtureInit { random, zero };

struct FixtureOptions {
  ModelConfig config;
  std::uint64_t seed = 42;
  FixtureInit init = FixtureInit::random;
  // Standard deviation of the normal draws for projections and embeddings.
  double init_std = 0.2;
};

// Weights drawn from a seeded generator and rounded to float32, so the
// in-memory model equals what a save/load round trip produces.
ModelWeights fixture_weights(const FixtureOptions& options);
LanguageModel make_fixture(const FixtureOptions& options);

void round_to_float(ModelWeights& weights);

// Synthetic subject-verb agreement grammar:
//   the N V
//   the N P the N2 V
// The verb agrees in number with the first noun; N2 is an attractor.
struct AgreementGrammar {
  std::vector<std::pair<std::string, std::string>> nouns;  // (singular, plural)
  std::vector<std::pair<std::string, std::string>> verbs;  // (singular, plural)
  std::vector<std::string> prepositions;

  static AgreementGrammar standard();

  // Every grammatical sentence paired with its agreement-violating twin.
  std::vector<MinimalPair> all_pairs() const;
  std::vector<std::string> lexicon() const;
};

struct AgreementSplit {
  std::vector<std::string> train;      // grammatical sentences
  std::vector<MinimalPair> held_out;   // pairs whose good sentence is not in train
};

AgreementSplit make_agreement_split(const AgreementGrammar& grammar, std::size_t n_train, std::size_t n_held_out,
                                    std::uint64_t seed);

// Random minimal pairs over the fixture lexicon whose good/bad assignment is
// a coin flip; a model with no knowledge of the labels scores ~0.5 on them.
std::vector<MinimalPair> random_label_pairs(const AgreementGrammar& grammar, std::size_t n, std::uint64_t seed);

// Random abductive instances built from grammar sentences with random labels.
std::vector<AbductiveInstance> random_abductive(const AgreementGrammar& grammar, std::size_t n, std::uint64_t seed);

}  // namespace lmscore
