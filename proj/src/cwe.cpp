#include "lmscore/cwe.hpp"

#include <algorithm>
#include <set>

#include "lmscore/errors.hpp"

namespace lmscore {

std::vector<std::size_t> resolve_layers(const LayerSpec& spec, std::size_t n_layers) {
  std::vector<std::size_t> out;
  if (std::holds_alternative<AllLayers>(spec)) {
    for (std::size_t i = 0; i <= n_layers; ++i) out.push_back(i);
    return out;
  }
  if (const auto* single = std::get_if<std::size_t>(&spec)) {
    out.push_back(*single);
  } else {
    out = std::get<std::vector<std::size_t>>(spec);
    if (out.empty()) throw InputError("layer list is empty");
    if (std::set<std::size_t>(out.begin(), out.end()).size() != out.size()) {
      throw InputError("layer list contains duplicates");
    }
  }
  for (const std::size_t l : out) {
    if (l > n_layers) {
      throw InputError("layer " + std::to_string(l) + " out of range [0, " + std::to_string(n_layers) + "]");
    }
  }
  return out;
}

Vector reduce_rows(const Matrix& rows, const Reduction& reduction) {
  if (rows.rows == 0) throw InputError("cannot reduce an empty span");
  if (const auto* fn = std::get_if<ReductionFn>(&reduction)) {
    Vector v = (*fn)(rows);
    if (v.size() != rows.cols) {
      throw InputError("custom reduction returned " + std::to_string(v.size()) + " values, expected " +
                       std::to_string(rows.cols));
    }
    return v;
  }
  const auto kind = std::get<ReductionKind>(reduction);
  switch (kind) {
    case ReductionKind::first:
      return {rows.row(0).begin(), rows.row(0).end()};
    case ReductionKind::last:
      return {rows.row(rows.rows - 1).begin(), rows.row(rows.rows - 1).end()};
    case ReductionKind::sum:
    case ReductionKind::mean: {
      Vector acc(rows.cols, 0.0);
      for (std::size_t r = 0; r < rows.rows; ++r) {
        const auto row = rows.row(r);
        for (std::size_t c = 0; c < rows.cols; ++c) acc[c] += row[c];
      }
      if (kind == ReductionKind::mean && rows.rows > 1) {
        for (double& x : acc) x /= static_cast<double>(rows.rows);
      }
      return acc;
    }
  }
  throw InputError("unknown reduction");
}

TokenRange stimulus_range(const Encoding& enc, const SpanStimulus& stimulus) {
  if (std::holds_alternative<WholeSentence>(stimulus.target)) {
    if (enc.content_size() == 0) throw LookupError("sentence has no non-special tokens");
    const std::size_t first = enc.content_position(0);
    const std::size_t last = enc.content_position(enc.content_size() - 1);
    for (std::size_t p = first; p <= last; ++p) {
      if (enc.special_mask[p]) {
        throw LookupError("whole-sentence target spans a special token in '" + enc.source + "'");
      }
    }
    return {first, last + 1};
  }
  if (const auto* word = std::get_if<std::string>(&stimulus.target)) return resolve_span(enc, *word);
  return resolve_span(enc, std::get<CharSpan>(stimulus.target));
}

std::vector<Matrix> extract_representation(const LanguageModel& lm, const std::vector<SpanStimulus>& stimuli,
                                           const LayerSpec& layers, const Reduction& reduction,
                                           std::size_t workers) {
  if (stimuli.empty()) throw InputError("no stimuli to extract");
  const auto& config = lm.model.config;
  const auto selected = resolve_layers(layers, config.n_layers);

  std::vector<Encoding> encodings;
  std::vector<TokenRange> ranges;
  std::vector<std::vector<TokenId>> inputs;
  for (std::size_t i = 0; i < stimuli.size(); ++i) {
    Encoding enc = encode(lm.vocab, stimuli[i].sentence, true);
    if (enc.size() > config.max_seq_len) {
      throw InputError("stimulus " + std::to_string(i) + " exceeds max_seq_len");
    }
    try {
      ranges.push_back(stimulus_range(enc, stimuli[i]));
    } catch (const LookupError& e) {
      throw LookupError("stimulus " + std::to_string(i) + ": " + e.what());
    }
    inputs.push_back(enc.ids);
    encodings.push_back(std::move(enc));
  }
  const auto outputs = forward_batch(lm.model, inputs, workers);

  std::vector<Matrix> result(selected.size(), Matrix(stimuli.size(), config.d_model));
  for (std::size_t s = 0; s < stimuli.size(); ++s) {
    for (std::size_t li = 0; li < selected.size(); ++li) {
      const Matrix& hidden = outputs[s].hidden_states[selected[li]];
      const TokenRange r = ranges[s];
      Matrix rows(r.size(), config.d_model);
      for (std::size_t p = r.begin; p < r.end; ++p) {
        std::copy(hidden.row(p).begin(), hidden.row(p).end(), rows.row(p - r.begin).begin());
      }
      const Vector pooled = reduce_rows(rows, reduction);
      std::copy(pooled.begin(), pooled.end(), result[li].row(s).begin());
    }
  }
  return result;
}

Matrix extract_layer(const LanguageModel& lm, const std::vector<SpanStimulus>& stimuli, std::size_t layer,
                     const Reduction& reduction, std::size_t workers) {
  return std::move(extract_representation(lm, stimuli, layer, reduction, workers).front());
}

Matrix combine_layers(const std::vector<Matrix>& per_layer, LayerCombiner combiner) {
  if (per_layer.empty()) throw InputError("combine_layers needs at least one matrix");
  const std::size_t rows = per_layer.front().rows;
  for (const auto& m : per_layer) {
    if (m.rows != rows) throw InputError("combine_layers: row counts differ");
  }
  if (combiner == LayerCombiner::concat) {
    std::size_t cols = 0;
    for (const auto& m : per_layer) cols += m.cols;
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t c0 = 0;
      for (const auto& m : per_layer) {
        std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(c0));
        c0 += m.cols;
      }
    }
    return out;
  }
  const std::size_t cols = per_layer.front().cols;
  for (const auto& m : per_layer) {
    if (m.cols != cols) throw InputError("combine_layers: column counts differ");
  }
  Matrix out = per_layer.front();
  for (std::size_t i = 1; i < per_layer.size(); ++i) {
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += per_layer[i].data[k];
  }
  if (combiner == LayerCombiner::mean && per_layer.size() > 1) {
    for (double& x : out.data) x /= static_cast<double>(per_layer.size());
  }
  return out;
}

}  // namespace lmscore
