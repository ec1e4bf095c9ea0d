#include <cmath>

#include "doctest.h"
#include "lmscore/cwe.hpp"
#include "lmscore/errors.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace lmscore;

namespace {

// Mean of hidden rows [begin, end) at `layer`, straight from forward().
Vector gathered_mean(const LanguageModel& lm, const std::string& sentence, std::size_t layer, std::size_t begin,
                     std::size_t end) {
  const auto f = forward(lm.model, encode(lm.vocab, sentence, true).ids);
  Vector out(lm.model.config.d_model, 0.0);
  for (std::size_t p = begin; p < end; ++p)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += f.hidden_states[layer](p, j);
  for (double& x : out) x /= static_cast<double>(end - begin);
  return out;
}

}  // namespace

TEST_CASE("two stimuli at the last layer give a batch x d_model matrix") {
  const auto lm = testing::fixture(Architecture::bidirectional);
  const std::vector<SpanStimulus> stimuli{{"The robin flew away.", CharSpan{4, 9}},
                                          {"The robin flew away.", std::string("robin")}};
  const Matrix m = extract_layer(lm, stimuli, 2);
  CHECK(m.rows == 2);
  CHECK(m.cols == 16);
  // Span and word forms of the same target agree.
  CHECK(std::equal(m.row(0).begin(), m.row(0).end(), m.row(1).begin()));
}

TEST_CASE("two-token span mean is the average of the gathered rows") {
  const auto lm = testing::fixture(Architecture::causal, 3);
  // "away." is away + ##. at positions 4 and 5 (position 0 is bos).
  const Matrix m = extract_layer(lm, {{"The robin flew away.", std::string("away.")}}, 1);
  const Vector want = gathered_mean(lm, "The robin flew away.", 1, 4, 6);
  for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(m(0, j) - want[j]) <= 1e-12);

  const Matrix first = extract_layer(lm, {{"The robin flew away.", std::string("away.")}}, 1, ReductionKind::first);
  const Matrix last = extract_layer(lm, {{"The robin flew away.", std::string("away.")}}, 1, ReductionKind::last);
  const Matrix sum = extract_layer(lm, {{"The robin flew away.", std::string("away.")}}, 1, ReductionKind::sum);
  const auto f = forward(lm.model, encode(lm.vocab, "The robin flew away.", true).ids);
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(first(0, j) == f.hidden_states[1](4, j));
    CHECK(last(0, j) == f.hidden_states[1](5, j));
    CHECK(std::abs(sum(0, j) - 2 * want[j]) <= 1e-12);
  }
}

TEST_CASE("single-token targets are reduction invariant") {
  const auto lm = testing::fixture(Architecture::bidirectional, 4);
  const std::vector<SpanStimulus> s{{"the cat sat on the mat", std::string("sat")}};
  const Matrix mean = extract_layer(lm, s, 2, ReductionKind::mean);
  for (const auto kind : {ReductionKind::first, ReductionKind::last, ReductionKind::sum}) {
    CHECK(extract_layer(lm, s, 2, kind) == mean);
  }
}

TEST_CASE("whole-sentence mean covers every non-special row") {
  const auto lm = testing::fixture(Architecture::bidirectional, 5);
  const std::string sentence = "the dogs sleep near the mat";
  const Matrix m = extract_layer(lm, {{sentence, WholeSentence{}}}, 1);
  const auto enc = encode(lm.vocab, sentence, true);
  const auto ref = oracle::forward(lm.model, enc.ids);
  for (std::size_t j = 0; j < 16; ++j) {
    long double acc = 0;
    for (std::size_t p = 1; p + 1 < enc.size(); ++p) acc += ref.hidden[1][p][j];
    CHECK(std::abs(m(0, j) - static_cast<double>(acc / (enc.size() - 2))) <= 1e-7);
  }
}

TEST_CASE("layer lists keep selection order and agree with single layers") {
  const auto lm = testing::fixture(Architecture::causal, 6);
  const std::vector<SpanStimulus> s{{"the cat sat", std::string("cat")}, {"the dogs run", CharSpan{4, 8}}};
  const auto pair = extract_representation(lm, s, std::vector<std::size_t>{2, 0});
  REQUIRE(pair.size() == 2);
  CHECK(pair[0] == extract_layer(lm, s, 2));
  CHECK(pair[1] == extract_layer(lm, s, 0));
  const auto all = extract_representation(lm, s, AllLayers{});
  REQUIRE(all.size() == 3);
  CHECK(all[1] == extract_layer(lm, s, 1));
}

TEST_CASE("layer 0 ignores attention parameters") {
  auto lm = testing::fixture(Architecture::bidirectional, 7);
  const std::vector<SpanStimulus> s{{"the cat sat on the mat", WholeSentence{}}};
  const Matrix before = extract_layer(lm, s, 0);
  for (auto& l : lm.model.weights.layers) {
    for (auto* m : {&l.q_weight, &l.k_weight, &l.v_weight, &l.o_weight}) std::fill(m->data.begin(), m->data.end(), 0.0);
  }
  CHECK(extract_layer(lm, s, 0) == before);
  // Deeper layers do depend on them.
  CHECK_FALSE(extract_layer(lm, s, 1) == extract_layer(testing::fixture(Architecture::bidirectional, 7), s, 1));
}

TEST_CASE("custom reductions") {
  const auto lm = testing::fixture(Architecture::causal, 8);
  const std::vector<SpanStimulus> s{{"the robin flew away.", std::string("away.")}};
  const ReductionFn max_pool = [](const Matrix& rows) {
    Vector out(rows.cols, -INFINITY);
    for (std::size_t r = 0; r < rows.rows; ++r)
      for (std::size_t c = 0; c < rows.cols; ++c) out[c] = std::max(out[c], rows(r, c));
    return out;
  };
  const Matrix m = extract_layer(lm, s, 2, max_pool);
  const Matrix first = extract_layer(lm, s, 2, ReductionKind::first);
  const Matrix last = extract_layer(lm, s, 2, ReductionKind::last);
  for (std::size_t j = 0; j < 16; ++j) CHECK(m(0, j) == std::max(first(0, j), last(0, j)));

  const ReductionFn wrong = [](const Matrix&) { return Vector(3, 0.0); };
  CHECK_THROWS_AS(extract_layer(lm, s, 2, wrong), InputError);
}

TEST_CASE("combine_layers") {
  Matrix a(2, 16), b(2, 16);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = 0.5 * static_cast<double>(i);
    b.data[i] = -1.0 * static_cast<double>(i);
  }
  CHECK(combine_layers({a}, LayerCombiner::mean) == a);
  CHECK(combine_layers({a}, LayerCombiner::sum) == a);
  CHECK(combine_layers({a, a}, LayerCombiner::mean) == a);
  const Matrix cat = combine_layers({a, b}, LayerCombiner::concat);
  CHECK(cat.rows == 2);
  CHECK(cat.cols == 32);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      CHECK(cat(r, c) == a(r, c));
      CHECK(cat(r, 16 + c) == b(r, c));
    }
  const Matrix s = combine_layers({a, b}, LayerCombiner::sum);
  CHECK(s(1, 3) == a(1, 3) + b(1, 3));
  CHECK_THROWS_AS(combine_layers({a, Matrix(3, 16)}, LayerCombiner::concat), InputError);
  CHECK_THROWS_AS(combine_layers({a, Matrix(2, 8)}, LayerCombiner::mean), InputError);
  CHECK_THROWS_AS(combine_layers({}, LayerCombiner::sum), InputError);
}

TEST_CASE("extraction errors") {
  const auto lm = testing::fixture(Architecture::causal);
  const std::vector<SpanStimulus> s{{"the cat sat", std::string("cat")}};
  CHECK_THROWS_AS(extract_layer(lm, s, 3), InputError);
  CHECK_THROWS_AS(extract_representation(lm, s, std::vector<std::size_t>{1, 1}), InputError);
  CHECK_THROWS_AS(extract_representation(lm, s, std::vector<std::size_t>{}), InputError);
  CHECK_THROWS_AS(extract_layer(lm, {{"the cat sat", std::string("dog")}}, 1), LookupError);
  CHECK_THROWS_WITH(extract_layer(lm, {s[0], {"the cat sat", CharSpan{5, 5}}}, 1), doctest::Contains("stimulus 1"));
  CHECK_THROWS_AS(extract_layer(lm, {}, 1), InputError);
}
