#include "lmscore/fixture.hpp"

#include <algorithm>
#include <set>

#include "lmscore/errors.hpp"
#include "lmscore/random.hpp"

namespace lmscore {

namespace {

const char* const kSpecialSurfaces[] = {"[PAD]", "[UNK]", "[BOS]", "[EOS]", "[MASK]"};

// The first 27 entries fill a 32-token vocabulary; the rest extend it to
// cover the full agreement lexicon.
const char* const kWordList[] = {
    "the",   "cat",    "cats",  "dog",    "dogs",  "bird",  "birds", "sat",   "on",     "mat",
    "runs",  "run",    "sleeps", "sleep", "sits",  "sit",   "near",  "by",    "is",     "are",
    "robin", "flew",   "away",  "##s",    "##cat", "##.",   "##ing",
    "robins", "fox",   "foxes", "horse",  "horses", "pig",  "pigs",  "cow",   "cows",   "eats",
    "eat",   "jumps",  "jump",  "sings",  "sing",  "behind", "with", "mats",  "a",      "and",
};

}  // namespace

Vocabulary fixture_vocabulary(std::size_t size) {
  if (size < 6) throw ConfigError("fixture vocabulary needs at least 6 tokens, got " + std::to_string(size));
  std::vector<std::string> tokens(std::begin(kSpecialSurfaces), std::end(kSpecialSurfaces));
  for (const char* w : kWordList) {
    if (tokens.size() == size) break;
    tokens.emplace_back(w);
  }
  for (std::size_t k = 0; tokens.size() < size; ++k) tokens.push_back("w" + std::to_string(k));
  SpecialIds special;
  special.pad = 0;
  special.unk = 1;
  special.bos = 2;
  special.eos = 3;
  special.mask = 4;
  return Vocabulary(std::move(tokens), special);
}

void round_to_float(ModelWeights& weights) {
  for (auto& t : named_tensors(weights)) {
    for (double& v : t.values) v = static_cast<double>(static_cast<float>(v));
  }
}

ModelWeights fixture_weights(const FixtureOptions& options) {
  ModelWeights w = ModelWeights::zeros(options.config);
  if (options.init == FixtureInit::zero) return w;
  if (!(options.init_std > 0.0)) throw ConfigError("init_std must be positive");
  Rng rng(options.seed);
  for (auto& t : named_tensors(w)) {
    const bool gain = t.name.ends_with(".gain");
    const bool bias = t.name.ends_with(".bias");
    for (double& v : t.values) {
      const double z = rng.normal();
      if (gain) {
        v = 1.0 + 0.1 * z;
      } else if (bias) {
        v = 0.1 * options.init_std * z;
      } else {
        v = options.init_std * z;
      }
    }
  }
  round_to_float(w);
  return w;
}

LanguageModel make_fixture(const FixtureOptions& options) {
  options.config.validate();
  return LanguageModel{fixture_vocabulary(options.config.vocab_size),
                       Model{options.config, fixture_weights(options)}};
}

AgreementGrammar AgreementGrammar::standard() {
  AgreementGrammar g;
  g.nouns = {{"cat", "cats"}, {"dog", "dogs"}, {"bird", "birds"}, {"robin", "robins"},
             {"fox", "foxes"}, {"horse", "horses"}, {"pig", "pigs"}, {"cow", "cows"}};
  g.verbs = {{"runs", "run"}, {"sleeps", "sleep"}, {"sits", "sit"},
             {"eats", "eat"}, {"jumps", "jump"},   {"sings", "sing"}};
  g.prepositions = {"near", "by", "behind", "with"};
  return g;
}

std::vector<std::string> AgreementGrammar::lexicon() const {
  std::vector<std::string> words{"the"};
  for (const auto& [s, p] : nouns) {
    words.push_back(s);
    words.push_back(p);
  }
  for (const auto& [s, p] : verbs) {
    words.push_back(s);
    words.push_back(p);
  }
  words.insert(words.end(), prepositions.begin(), prepositions.end());
  return words;
}

std::vector<MinimalPair> AgreementGrammar::all_pairs() const {
  std::vector<MinimalPair> out;
  auto noun_form = [&](std::size_t n, bool plural) { return plural ? nouns[n].second : nouns[n].first; };
  auto verb_form = [&](std::size_t v, bool plural) { return plural ? verbs[v].second : verbs[v].first; };
  auto emit = [&](const std::string& stem, bool plural, std::size_t v, const std::string& paradigm) {
    MinimalPair p;
    p.good = stem + " " + verb_form(v, plural);
    p.bad = stem + " " + verb_form(v, !plural);
    p.phenomenon = "subject_verb_agreement";
    p.paradigm = paradigm;
    p.uid = paradigm + "/" + std::to_string(out.size());
    out.push_back(std::move(p));
  };
  for (std::size_t n = 0; n < nouns.size(); ++n) {
    for (const bool plural : {false, true}) {
      for (std::size_t v = 0; v < verbs.size(); ++v) emit("the " + noun_form(n, plural), plural, v, "simple");
    }
  }
  for (std::size_t n = 0; n < nouns.size(); ++n) {
    for (const bool plural : {false, true}) {
      for (const auto& prep : prepositions) {
        for (std::size_t n2 = 0; n2 < nouns.size(); ++n2) {
          for (const bool plural2 : {false, true}) {
            const std::string stem = "the " + noun_form(n, plural) + " " + prep + " the " + noun_form(n2, plural2);
            for (std::size_t v = 0; v < verbs.size(); ++v) emit(stem, plural, v, "attractor");
          }
        }
      }
    }
  }
  return out;
}

AgreementSplit make_agreement_split(const AgreementGrammar& grammar, std::size_t n_train, std::size_t n_held_out,
                                    std::uint64_t seed) {
  auto pairs = grammar.all_pairs();
  if (n_train + n_held_out > pairs.size()) {
    throw InputError("agreement grammar has only " + std::to_string(pairs.size()) + " sentences");
  }
  Rng rng(seed);
  rng.shuffle(pairs);
  AgreementSplit split;
  for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(pairs[i].good);
  split.held_out.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train),
                        pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_held_out));
  return split;
}

std::vector<MinimalPair> random_label_pairs(const AgreementGrammar& grammar, std::size_t n, std::uint64_t seed) {
  const auto pool = grammar.all_pairs();
  Rng rng(seed);
  std::vector<MinimalPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    MinimalPair p = pool[rng.uniform_index(pool.size())];
    if (rng.coin()) std::swap(p.good, p.bad);
    p.phenomenon = "random_label";
    p.uid = "random/" + std::to_string(i);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<AbductiveInstance> random_abductive(const AgreementGrammar& grammar, std::size_t n, std::uint64_t seed) {
  const auto pool = grammar.all_pairs();
  Rng rng(seed);
  auto pick = [&] { return pool[rng.uniform_index(pool.size())].good; };
  std::vector<AbductiveInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    AbductiveInstance a;
    a.obs1 = pick();
    a.hyp1 = pick();
    a.hyp2 = pick();
    a.obs2 = pick();
    a.label = rng.coin() ? 2 : 1;
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace lmscore
