#include "lmscore/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmscore/errors.hpp"

namespace lmscore {

namespace {

struct ScoreJob {
  std::vector<TokenId> ids;
  std::vector<std::size_t> positions;
};

}  // namespace

double surprisal_bits(double logprob) { return -logprob / std::log(2.0) + 0.0; }

std::size_t competition_rank(std::span<const double> values, std::size_t index) {
  const double target = values[index];
  std::size_t greater = 0;
  for (const double v : values) {
    if (v > target) ++greater;
  }
  return greater + 1;
}

void to_surprisal(std::vector<std::vector<TokenScore>>& scores) {
  for (auto& sentence : scores) {
    for (auto& t : sentence) t.surprisal = t.placeholder ? 0.0 : surprisal_bits(t.logprob);
  }
}

Scorer::Scorer(const LanguageModel& lm, ScorerOptions options) : lm_(lm), options_(options) {
  if (lm_.vocab.size() != lm_.model.config.vocab_size) {
    throw ConfigError("vocabulary size does not match model vocab_size");
  }
}

Encoding Scorer::encode_checked(const std::string& text) const {
  Encoding enc = encode(lm_.vocab, text, options_.add_special);
  if (enc.content_size() == 0) {
    throw InputError("sentence '" + text + "' has no non-special tokens");
  }
  if (enc.size() > lm_.model.config.max_seq_len) {
    throw InputError("sentence '" + text + "' encodes to " + std::to_string(enc.size()) +
                     " tokens, above max_seq_len " + std::to_string(lm_.model.config.max_seq_len));
  }
  return enc;
}

namespace {

// Flattened execution of many jobs: causal jobs need one forward pass each,
// masked jobs one per scored position. All passes go through a single
// forward_batch call and are regrouped per job.
struct BatchResult {
  std::vector<std::vector<double>> logprobs;
  std::vector<std::vector<std::size_t>> ranks;
};

BatchResult run_jobs(const LanguageModel& lm, const std::vector<ScoreJob>& jobs, bool want_rank,
                     std::size_t workers) {
  const bool causal = lm.architecture() == Architecture::causal;
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::pair<std::size_t, std::size_t>> origin;  // (job, first position index)
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (causal) {
      inputs.push_back(jobs[j].ids);
      origin.emplace_back(j, 0);
    } else {
      for (std::size_t i = 0; i < jobs[j].positions.size(); ++i) {
        auto ids = jobs[j].ids;
        ids[jobs[j].positions[i]] = lm.vocab.special().mask;
        inputs.push_back(std::move(ids));
        origin.emplace_back(j, i);
      }
    }
  }
  const auto outputs = forward_batch(lm.model, inputs, workers);

  BatchResult result;
  result.logprobs.resize(jobs.size());
  result.ranks.resize(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    result.logprobs[j].resize(jobs[j].positions.size());
    if (want_rank) result.ranks[j].resize(jobs[j].positions.size());
  }
  auto read = [&](std::size_t job, std::size_t i, const Matrix& logits, std::size_t row) {
    const TokenId target = jobs[job].ids[jobs[job].positions[i]];
    const Vector lp = log_probs(logits.row(row));
    result.logprobs[job][i] = lp[static_cast<std::size_t>(target)];
    if (want_rank) {
      Vector probs(lp.size());
      std::transform(lp.begin(), lp.end(), probs.begin(), [](double v) { return std::exp(v); });
      result.ranks[job][i] = competition_rank(probs, static_cast<std::size_t>(target));
    }
  };
  for (std::size_t n = 0; n < outputs.size(); ++n) {
    const auto [job, first] = origin[n];
    if (causal) {
      for (std::size_t i = 0; i < jobs[job].positions.size(); ++i) {
        read(job, i, outputs[n].logits, jobs[job].positions[i] - 1);
      }
    } else {
      read(job, first, outputs[n].logits, jobs[job].positions[first]);
    }
  }
  return result;
}

void check_batch(const std::vector<std::string>& sentences) {
  if (sentences.empty()) throw InputError("empty batch");
}

}  // namespace

std::vector<std::vector<TokenScore>> Scorer::token_score(const ScoringRequest& request) const {
  check_batch(request.sentences);
  const bool causal = lm_.architecture() == Architecture::causal;
  std::vector<Encoding> encodings;
  std::vector<ScoreJob> jobs;
  // Per sentence: content positions, and whether the first one is the
  // unconditioned causal placeholder.
  for (const auto& s : request.sentences) {
    Encoding enc = encode_checked(s);
    ScoreJob job{enc.ids, {}};
    for (std::size_t i = 0; i < enc.content_size(); ++i) {
      if (causal && i == 0) continue;
      job.positions.push_back(enc.content_position(i));
    }
    jobs.push_back(std::move(job));
    encodings.push_back(std::move(enc));
  }
  const BatchResult result = run_jobs(lm_, jobs, request.want_rank, options_.workers);

  std::vector<std::vector<TokenScore>> out(request.sentences.size());
  for (std::size_t s = 0; s < encodings.size(); ++s) {
    const Encoding& enc = encodings[s];
    std::size_t scored = 0;
    for (std::size_t i = 0; i < enc.content_size(); ++i) {
      const std::size_t p = enc.content_position(i);
      TokenScore t;
      t.token = lm_.vocab.token(enc.ids[p]);
      if (causal && i == 0) {
        t.placeholder = true;
      } else {
        t.logprob = result.logprobs[s][scored];
        if (request.want_rank) t.rank = result.ranks[s][scored];
        ++scored;
      }
      out[s].push_back(std::move(t));
    }
  }
  if (request.mode == ScoreMode::surprisal) to_surprisal(out);
  return out;
}

namespace {

SequenceScore reduce(const std::vector<double>& logprobs, SequenceReduction reduction, const std::string& what) {
  if (logprobs.empty()) {
    throw InputError(what + " has no scored tokens (a causal sentence needs at least two)");
  }
  SequenceScore s;
  s.reduction = reduction;
  s.n_scored_tokens = logprobs.size();
  double sum = 0.0;
  for (const double v : logprobs) sum += v;
  s.value = reduction == SequenceReduction::sum ? sum : sum / static_cast<double>(logprobs.size());
  return s;
}

}  // namespace

std::vector<SequenceScore> Scorer::sequence_score(const ScoringRequest& request) const {
  ScoringRequest plain = request;
  plain.mode = ScoreMode::logprob;
  plain.want_rank = false;
  const auto tokens = token_score(plain);
  std::vector<SequenceScore> out;
  out.reserve(tokens.size());
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    std::vector<double> lps;
    for (const auto& t : tokens[s]) {
      if (!t.placeholder) lps.push_back(t.logprob);
    }
    out.push_back(reduce(lps, request.reduction, "sentence '" + request.sentences[s] + "'"));
  }
  return out;
}

std::vector<SequenceScore> Scorer::partial_score(const std::vector<std::string>& prefixes,
                                                 const std::vector<std::string>& continuations,
                                                 SequenceReduction reduction) const {
  check_batch(prefixes);
  if (prefixes.size() != continuations.size()) {
    throw InputError("partial_score needs as many continuations (" + std::to_string(continuations.size()) +
                     ") as prefixes (" + std::to_string(prefixes.size()) + ")");
  }
  const auto& sp = lm_.vocab.special();
  std::vector<ScoreJob> jobs;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    if (collapse_whitespace(prefixes[i]).empty() || collapse_whitespace(continuations[i]).empty()) {
      throw InputError("partial_score pair " + std::to_string(i) + " has an empty prefix or continuation");
    }
    const Encoding pre = encode(lm_.vocab, prefixes[i], false);
    const Encoding cont = encode(lm_.vocab, continuations[i], false);
    ScoreJob job;
    if (options_.add_special) job.ids.push_back(sp.bos);
    job.ids.insert(job.ids.end(), pre.ids.begin(), pre.ids.end());
    const std::size_t cont_begin = job.ids.size();
    job.ids.insert(job.ids.end(), cont.ids.begin(), cont.ids.end());
    if (options_.add_special) job.ids.push_back(sp.eos);
    if (job.ids.size() > lm_.model.config.max_seq_len) {
      throw InputError("partial_score pair " + std::to_string(i) + " encodes to " + std::to_string(job.ids.size()) +
                       " tokens, above max_seq_len " + std::to_string(lm_.model.config.max_seq_len));
    }
    for (std::size_t p = 0; p < cont.ids.size(); ++p) {
      if (!cont.special_mask[p]) job.positions.push_back(cont_begin + p);
    }
    if (job.positions.empty()) {
      throw InputError("partial_score pair " + std::to_string(i) + " has no scoreable continuation tokens");
    }
    jobs.push_back(std::move(job));
  }
  const BatchResult result = run_jobs(lm_, jobs, false, options_.workers);
  std::vector<SequenceScore> out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    out.push_back(reduce(result.logprobs[i], reduction, "continuation " + std::to_string(i)));
  }
  return out;
}

Vector Scorer::mask_distribution(const std::string& stimulus) const {
  const Encoding enc = encode(lm_.vocab, stimulus, options_.add_special);
  const TokenId mask = lm_.vocab.special().mask;
  const auto n_masks = std::count(enc.ids.begin(), enc.ids.end(), mask);
  if (n_masks != 1) {
    throw InputError("stimulus '" + stimulus + "' must contain exactly one " + lm_.vocab.token(mask) +
                     " token (found " + std::to_string(n_masks) + ")");
  }
  if (enc.size() > lm_.model.config.max_seq_len) {
    throw InputError("stimulus '" + stimulus + "' exceeds max_seq_len");
  }
  const auto mask_pos = static_cast<std::size_t>(std::find(enc.ids.begin(), enc.ids.end(), mask) - enc.ids.begin());
  if (lm_.architecture() == Architecture::bidirectional) {
    const ForwardOutput fo = forward(lm_.model, enc.ids);
    return log_probs(fo.logits.row(mask_pos));
  }
  // Causal models can only predict a final mask, from the next-token
  // distribution of the prefix before it.
  const auto& sp = lm_.vocab.special();
  for (std::size_t p = mask_pos + 1; p < enc.size(); ++p) {
    if (enc.ids[p] != sp.eos && enc.ids[p] != sp.pad) {
      throw UnsupportedError("causal models only support a mask in the final position: '" + stimulus + "'");
    }
  }
  if (mask_pos == 0) {
    throw UnsupportedError("causal model has no context before the mask in '" + stimulus + "'");
  }
  const std::vector<TokenId> prefix(enc.ids.begin(), enc.ids.begin() + static_cast<std::ptrdiff_t>(mask_pos));
  const ForwardOutput fo = forward(lm_.model, prefix);
  return log_probs(fo.logits.row(mask_pos - 1));
}

std::vector<std::vector<Prediction>> Scorer::get_predictions(const std::vector<std::string>& stimuli,
                                                             std::size_t k) const {
  check_batch(stimuli);
  const std::size_t v = lm_.vocab.size();
  if (k < 1 || k > v) {
    throw InputError("k must be in [1, " + std::to_string(v) + "], got " + std::to_string(k));
  }
  std::vector<Vector> dists(stimuli.size());
  parallel_for(stimuli.size(), options_.workers, [&](std::size_t i) { dists[i] = mask_distribution(stimuli[i]); });

  std::vector<std::vector<Prediction>> out;
  for (const Vector& lp : dists) {
    Vector probs(lp.size());
    std::transform(lp.begin(), lp.end(), probs.begin(), [](double x) { return std::exp(x); });
    std::vector<std::size_t> order(v);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); });
    std::vector<Prediction> top;
    for (std::size_t i = 0; i < k; ++i) {
      top.push_back({lm_.vocab.token(static_cast<TokenId>(order[i])), probs[order[i]]});
    }
    out.push_back(std::move(top));
  }
  return out;
}

std::vector<std::vector<VocabQuery>> Scorer::query_vocab(const std::vector<std::string>& stimuli,
                                                         const std::vector<std::string>& restricted_vocab) const {
  check_batch(stimuli);
  if (restricted_vocab.empty()) throw InputError("restricted vocabulary is empty");
  std::vector<TokenId> ids;
  for (const auto& word : restricted_vocab) {
    const auto id = lm_.vocab.find(word);
    if (id) {
      ids.push_back(*id);
      continue;
    }
    if (!collapse_whitespace(word).empty() && encode(lm_.vocab, word, false).size() > 1) {
      throw VocabularyError("restricted token '" + word + "' splits into several vocabulary pieces");
    }
    throw VocabularyError("restricted token '" + word + "' is not a vocabulary token");
  }
  std::vector<Vector> dists(stimuli.size());
  parallel_for(stimuli.size(), options_.workers, [&](std::size_t i) { dists[i] = mask_distribution(stimuli[i]); });

  std::vector<std::vector<VocabQuery>> out;
  for (const Vector& lp : dists) {
    Vector probs(lp.size());
    std::transform(lp.begin(), lp.end(), probs.begin(), [](double x) { return std::exp(x); });
    std::vector<VocabQuery> row;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto idx = static_cast<std::size_t>(ids[i]);
      row.push_back({restricted_vocab[i], probs[idx], competition_rank(probs, idx)});
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace lmscore
