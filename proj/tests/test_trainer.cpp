#include <cmath>
#include <set>

#include "doctest.h"
#include "lmscore/errors.hpp"
#include "lmscore/random.hpp"
#include "lmscore/trainer.hpp"
#include "lmscore/weights_io.hpp"
#include "support/helpers.hpp"

using namespace lmscore;

namespace {

// Central finite differences on a handful of entries of every tensor.
void check_gradient(Architecture arch) {
  auto lm = testing::fixture(arch, 31);
  const std::vector<TokenId> ids{2, 5, 6, 4, 9, 3};
  const std::vector<std::size_t> rows{0, 2, 4};
  const std::vector<TokenId> targets{5, 7, 3};
  ModelWeights grad = ModelWeights::zeros(lm.model.config);
  loss_and_gradient(lm.model, ids, rows, targets, 0.5, &grad);

  Rng rng(3);
  auto params = named_tensors(lm.model.weights);
  const auto grads = named_tensors(std::as_const(grad));
  const double h = 1e-5;
  for (std::size_t t = 0; t < params.size(); ++t) {
    CAPTURE(params[t].name);
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = rng.uniform_index(params[t].values.size());
      const double saved = params[t].values[i];
      params[t].values[i] = saved + h;
      const double up = loss_and_gradient(lm.model, ids, rows, targets, 0.5, nullptr);
      params[t].values[i] = saved - h;
      const double down = loss_and_gradient(lm.model, ids, rows, targets, 0.5, nullptr);
      params[t].values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(numeric - grads[t].values[i]) <= 1e-6 + 1e-4 * std::abs(numeric));
    }
  }
}

}  // namespace

TEST_CASE("analytic gradient matches finite differences") {
  SUBCASE("causal") { check_gradient(Architecture::causal); }
  SUBCASE("bidirectional") { check_gradient(Architecture::bidirectional); }
}

TEST_CASE("zero model loss is ln V") {
  const auto lm = testing::fixture(Architecture::causal, 1, FixtureInit::zero);
  CHECK(corpus_loss(lm, {"the cat sat", "the dogs run"}) == doctest::Approx(std::log(32.0)).epsilon(1e-12));
}

TEST_CASE("agreement split keeps held-out sentences out of training") {
  const auto split = make_agreement_split(AgreementGrammar::standard(), 2000, 500, 42);
  CHECK(split.train.size() == 2000);
  CHECK(split.held_out.size() == 500);
  const std::set<std::string> train(split.train.begin(), split.train.end());
  for (const auto& p : split.held_out) {
    CHECK(train.count(p.good) == 0);
    CHECK(p.good != p.bad);
  }
  const auto again = make_agreement_split(AgreementGrammar::standard(), 2000, 500, 42);
  CHECK(again.train == split.train);
}

TEST_CASE("grammar lexicon is covered by the 52-token vocabulary") {
  const Vocabulary v = fixture_vocabulary(52);
  for (const auto& w : AgreementGrammar::standard().lexicon()) CHECK(v.find(w).has_value());
  CHECK(AgreementGrammar::standard().all_pairs().size() == 96 + 6144);
  CHECK_THROWS_AS(fixture_vocabulary(5), ConfigError);
}

TEST_CASE("training lowers the loss and is reproducible") {
  const auto split = make_agreement_split(AgreementGrammar::standard(), 200, 10, 1);
  for (const auto arch : {Architecture::causal, Architecture::bidirectional}) {
    auto a = testing::fixture(arch, 2, FixtureInit::random, 52);
    auto b = testing::fixture(arch, 2, FixtureInit::random, 52);
    TrainOptions o;
    o.steps = 60;
    o.batch_size = 8;
    const auto sa = train(a, split.train, o);
    const auto sb = train(b, split.train, o);
    CHECK(sa.step_losses == sb.step_losses);
    CHECK(serialize_weights(a.model) == serialize_weights(b.model));
    CHECK(sa.final_loss < sa.initial_loss);
    CHECK(sa.final_loss < std::log(52.0));
  }
}

TEST_CASE("training rejects bad options") {
  auto lm = testing::fixture(Architecture::causal);
  TrainOptions o;
  o.lr = 0;
  CHECK_THROWS_AS(train(lm, {"the cat"}, o), ConfigError);
  CHECK_THROWS_AS(train(lm, {}, TrainOptions{}), InputError);
}
