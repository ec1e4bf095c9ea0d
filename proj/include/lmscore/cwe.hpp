#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "lmscore/model.hpp"

namespace lmscore {

struct WholeSentence {
  friend bool operator==(const WholeSentence&, const WholeSentence&) = default;
};

struct SpanStimulus {
  std::string sentence;
  std::variant<std::string, CharSpan, WholeSentence> target;
};

struct AllLayers {};

// A single index, an ordered duplicate-free list, or every layer. Index 0 is
// the embedding output and n_layers the last block.
using LayerSpec = std::variant<std::size_t, std::vector<std::size_t>, AllLayers>;

enum class ReductionKind { mean, first, last, sum };

// User-supplied pooling over the gathered [span_len x d_model] rows; must
// return d_model values.
using ReductionFn = std::function<Vector(const Matrix& rows)>;

using Reduction = std::variant<ReductionKind, ReductionFn>;

enum class LayerCombiner { mean, sum, concat };

// Validates `spec` against the model depth and returns the selected indices
// in selection order.
std::vector<std::size_t> resolve_layers(const LayerSpec& spec, std::size_t n_layers);

Vector reduce_rows(const Matrix& rows, const Reduction& reduction);

// Token range a stimulus selects within its encoding (bos/eos included).
TokenRange stimulus_range(const Encoding& enc, const SpanStimulus& stimulus);

// One [batch x d_model] matrix per selected layer, in selection order.
std::vector<Matrix> extract_representation(const LanguageModel& lm, const std::vector<SpanStimulus>& stimuli,
                                           const LayerSpec& layers, const Reduction& reduction = ReductionKind::mean,
                                           std::size_t workers = 1);

// Single-layer convenience form.
Matrix extract_layer(const LanguageModel& lm, const std::vector<SpanStimulus>& stimuli, std::size_t layer,
                     const Reduction& reduction = ReductionKind::mean, std::size_t workers = 1);

Matrix combine_layers(const std::vector<Matrix>& per_layer, LayerCombiner combiner);

}  // namespace lmscore
