#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "lmscore/errors.hpp"
#include "lmscore/eval.hpp"
#include "lmscore/random.hpp"
#include "support/helpers.hpp"

using namespace lmscore;

namespace {

MinimalPair pair(std::string good, std::string bad, std::string phenomenon = "agr") {
  return {std::move(good), std::move(bad), std::move(phenomenon), "p", ""};
}

}  // namespace

TEST_CASE("BLiMP-format lines load in order with extras ignored") {
  const std::string text =
      R"({"sentence_good": "the cat sits", "sentence_bad": "the cat sit", "field": "syntax", "linguistics_term": "agreement", "UID": "simple", "pairID": "0", "one_prefix_method": true})"
      "\n"
      R"({"sentence_good": "the dogs run", "sentence_bad": "the dogs runs", "linguistics_term": "agreement", "UID": "simple", "pairID": 1})"
      "\n"
      R"({"sentence_good": "the bird sleeps", "sentence_bad": "the bird sleep", "linguistics_term": "other", "UID": "x"})"
      "\n";
  const auto pairs = parse_minimal_pairs(text);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].good == "the cat sits");
  CHECK(pairs[1].bad == "the dogs runs");
  CHECK(pairs[2].phenomenon == "other");
  CHECK(pairs[0].uid == "simple/0");
  CHECK(pairs[1].uid == "simple/1");
  CHECK(pairs[2].uid == "x/3");
}

TEST_CASE("minimal pair format errors name the line") {
  const std::string ok = R"({"sentence_good": "a", "sentence_bad": "b", "linguistics_term": "t", "UID": "u", "pairID": "1"})";
  CHECK_THROWS_WITH_AS(parse_minimal_pairs(ok + "\n" + R"({"sentence_good": "a", "linguistics_term": "t", "UID": "u"})"),
                       doctest::Contains("line 2: missing required field 'sentence_bad'"), FormatError);
  CHECK_THROWS_WITH_AS(parse_minimal_pairs(ok + "\n{not json\n"), doctest::Contains("line 2"), FormatError);
  CHECK_THROWS_WITH_AS(parse_minimal_pairs(ok + "\n" + ok + "\n"), doctest::Contains("duplicate"), FormatError);
  CHECK_THROWS_AS(parse_minimal_pairs("[1, 2]\n"), FormatError);
}

TEST_CASE("abductive loading") {
  const std::string instances =
      R"({"obs1": "Tim was entering a baking contest.", "obs2": "Tim won the baking contest.", "hyp1": "Tim made an extremely greasy donut.", "hyp2": "Tim made a great cheese cake."})"
      "\n"
      R"({"obs1": "a", "obs2": "b", "hyp1": "c", "hyp2": "d"})"
      "\n";
  const auto loaded = parse_abductive(instances, "2\n1\n");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].label == 2);
  CHECK(loaded[0].hyp2 == "Tim made a great cheese cake.");
  CHECK(loaded[1].label == 1);
  CHECK_THROWS_WITH_AS(parse_abductive(instances, "2\n1\n1\n"), doctest::Contains("count mismatch"), FormatError);
  CHECK_THROWS_AS(parse_abductive(instances, "2\n3\n"), FormatError);
  CHECK_THROWS_AS(parse_abductive(R"({"obs1": "a", "obs2": "b", "hyp1": "c"})", "1\n"), FormatError);
}

TEST_CASE("forced choice uses a strict comparison of mean scores") {
  const auto lm = testing::fixture(Architecture::bidirectional, 3);
  const Scorer scorer(lm);
  const auto tie = forced_choice(scorer, pair("the cat sat", "the cat sat"));
  CHECK_FALSE(tie.chose_good);
  CHECK(tie.score_good == tie.score_bad);

  const auto zero = testing::fixture(Architecture::causal, 1, FixtureInit::zero);
  const Scorer flat(zero);
  const auto uniform = forced_choice(flat, pair("the cat sits", "the cat sit"));
  CHECK_FALSE(uniform.chose_good);
  CHECK(uniform.score_good == doctest::Approx(-std::log(32.0)).epsilon(1e-14));

  ScoringRequest req;
  req.sentences = {"the cat sat on the mat", "the cats sat on the mat"};
  req.reduction = SequenceReduction::mean;
  const auto means = scorer.sequence_score(req);
  const auto c = forced_choice(scorer, pair(req.sentences[0], req.sentences[1]));
  CHECK(c.score_good == means[0].value);
  CHECK(c.score_bad == means[1].value);
  CHECK(c.chose_good == (means[0].value > means[1].value));
}

TEST_CASE("abductive selection scores obs2 given obs1 and the hypothesis") {
  const auto lm = testing::fixture(Architecture::causal, 4);
  const Scorer scorer(lm);
  const AbductiveInstance inst{"the cat sat", "the dog runs", "on the mat", "near the bird", 1};
  const auto choice = abductive_select(scorer, inst);
  const auto direct =
      scorer.partial_score({"the cat sat on the mat", "the cat sat near the bird"}, {"the dog runs", "the dog runs"},
                           SequenceReduction::sum);
  CHECK(choice.score1 == direct[0].value);
  CHECK(choice.score2 == direct[1].value);
  CHECK(choice.selected == (direct[1].value > direct[0].value ? 2 : 1));

  const AbductiveInstance same{"the cat sat", "the dog runs", "on the mat", "on the mat", 2};
  CHECK(abductive_select(scorer, same).selected == 1);

  const auto zero = testing::fixture(Architecture::causal, 1, FixtureInit::zero);
  const auto flat = abductive_select(Scorer(zero), inst);
  CHECK(flat.selected == 1);
  CHECK(flat.score1 == doctest::Approx(-3 * std::log(32.0)).epsilon(1e-14));
}

TEST_CASE("bootstrap report") {
  SUBCASE("all correct collapses the interval") {
    std::vector<std::pair<std::string, bool>> outcomes(50, {"g", true});
    const auto r = aggregate(EvalTask::minimal_pair, outcomes, 42);
    CHECK(r.overall_accuracy == 1.0);
    CHECK(r.groups.at("g").ci_low == 1.0);
    CHECK(r.groups.at("g").ci_high == 1.0);
  }
  SUBCASE("single item") {
    const auto r = aggregate(EvalTask::minimal_pair, {{"g", false}}, 42);
    CHECK(r.overall_accuracy == 0.0);
    CHECK(r.n_total == 1);
  }
  SUBCASE("groups, exact rationals and determinism") {
    Rng rng(5);
    std::vector<std::pair<std::string, bool>> outcomes;
    for (int i = 0; i < 300; ++i) outcomes.emplace_back(i % 3 == 0 ? "a" : "b", rng.coin());
    const auto r1 = aggregate(EvalTask::minimal_pair, outcomes, 7);
    const auto r2 = aggregate(EvalTask::minimal_pair, outcomes, 7);
    CHECK(report_to_json(r1) == report_to_json(r2));
    std::size_t n = 0;
    for (const auto& [name, g] : r1.groups) {
      n += g.n;
      CHECK(g.accuracy == static_cast<double>(g.correct) / static_cast<double>(g.n));
      CHECK(g.ci_low <= g.accuracy);
      CHECK(g.accuracy <= g.ci_high);
      // 95% interval of a ~0.5 proportion over ~100 items is about +-0.1.
      CHECK(g.ci_high - g.ci_low > 0.1);
      CHECK(g.ci_high - g.ci_low < 0.3);
    }
    CHECK(n == r1.n_total);
    CHECK(report_to_json(aggregate(EvalTask::minimal_pair, outcomes, 8)) != report_to_json(r1));
  }
  CHECK_THROWS_AS(aggregate(EvalTask::minimal_pair, {}, 42), InputError);
}

TEST_CASE("zero-weight model gets every equal-length pair wrong") {
  const auto zero = testing::fixture(Architecture::bidirectional, 1, FixtureInit::zero);
  const auto pairs = random_label_pairs(AgreementGrammar::standard(), 200, 3);
  const auto r = evaluate(Scorer(zero), pairs, 42);
  CHECK(r.overall_accuracy == 0.0);
}

TEST_CASE("label swap maps accuracy to its complement") {
  const auto lm = testing::fixture(Architecture::causal, 9, FixtureInit::random, 52);
  const Scorer scorer(lm);
  auto pairs = random_label_pairs(AgreementGrammar::standard(), 300, 4);
  const auto a = evaluate(scorer, pairs, 1);
  std::vector<MinimalPair> swapped = pairs;
  for (auto& p : swapped) std::swap(p.good, p.bad);
  const auto b = evaluate(scorer, swapped, 1);
  const auto choices = forced_choice(scorer, pairs);
  const auto ties = std::count_if(choices.begin(), choices.end(), [](const auto& c) { return c.score_good == c.score_bad; });
  CHECK(a.n_correct + b.n_correct + static_cast<std::size_t>(ties) == pairs.size());
}

TEST_CASE("report serialization") {
  const auto r = aggregate(EvalTask::abductive, {{"abductive", true}, {"abductive", false}}, 42);
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["task"] == "abductive");
  CHECK(j["n_total"] == 2);
  CHECK(j["groups"][0]["phenomenon"] == "abductive");
  const std::string tsv = report_to_tsv(r);
  CHECK(tsv.rfind("phenomenon\tn\taccuracy\tci_low\tci_high\n", 0) == 0);
  CHECK(tsv.find("abductive\t2\t0.500000\t") != std::string::npos);

  testing::TempDir dir("report");
  write_report(dir / "sub/report", r);
  CHECK(std::filesystem::exists(dir / "sub/report.json"));
  CHECK(std::filesystem::exists(dir / "sub/report.tsv"));
  CHECK_FALSE(std::filesystem::exists(dir / "sub/report.json.tmp"));
}
