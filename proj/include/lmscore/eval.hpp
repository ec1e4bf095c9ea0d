#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lmscore/scorer.hpp"

namespace lmscore {

struct MinimalPair {
  std::string good;
  std::string bad;
  std::string phenomenon;
  std::string paradigm;
  std::string uid;
};

struct AbductiveInstance {
  std::string obs1;
  std::string obs2;
  std::string hyp1;
  std::string hyp2;
  int label = 1;  // 1 or 2
};

struct ForcedChoice {
  bool chose_good = false;
  double score_good = 0.0;
  double score_bad = 0.0;
};

struct AbductiveChoice {
  int selected = 1;
  double score1 = 0.0;
  double score2 = 0.0;
};

struct GroupResult {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

enum class EvalTask { minimal_pair, abductive };

struct EvalReport {
  EvalTask task = EvalTask::minimal_pair;
  double overall_accuracy = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  std::map<std::string, GroupResult> groups;
  std::uint64_t seed = 0;
};

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double confidence = 0.95;
};

// Group name used for abductive reports, which carry no phenomenon labels.
inline constexpr const char* kAbductiveGroup = "abductive";

// BLiMP-style JSONL: sentence_good, sentence_bad, linguistics_term, UID;
// other fields are ignored. phenomenon = linguistics_term, paradigm = UID,
// uid = UID "/" pairID (line number when pairID is absent).
std::vector<MinimalPair> parse_minimal_pairs(std::string_view jsonl);
std::vector<MinimalPair> load_minimal_pairs(const std::filesystem::path& path);

// Instances JSONL (obs1, obs2, hyp1, hyp2) zipped with a labels file holding
// one 1 or 2 per line.
std::vector<AbductiveInstance> parse_abductive(std::string_view instances_jsonl, std::string_view labels);
std::vector<AbductiveInstance> load_abductive(const std::filesystem::path& instances,
                                              const std::filesystem::path& labels);

// Mean-reduced sequence scores; correct only when good scores strictly higher.
ForcedChoice forced_choice(const Scorer& scorer, const MinimalPair& pair);
std::vector<ForcedChoice> forced_choice(const Scorer& scorer, const std::vector<MinimalPair>& pairs);

// score_i = log p(obs2 | obs1 hyp_i), summed; ties select hypothesis 1.
AbductiveChoice abductive_select(const Scorer& scorer, const AbductiveInstance& instance);
std::vector<AbductiveChoice> abductive_select(const Scorer& scorer, const std::vector<AbductiveInstance>& instances);

// Accuracy per group and overall with percentile-bootstrap intervals.
// outcomes[i] pairs a group name with the correctness of item i.
EvalReport aggregate(EvalTask task, const std::vector<std::pair<std::string, bool>>& outcomes, std::uint64_t seed,
                     const BootstrapOptions& bootstrap = {});

EvalReport evaluate(const Scorer& scorer, const std::vector<MinimalPair>& dataset, std::uint64_t seed,
                    const BootstrapOptions& bootstrap = {});
EvalReport evaluate(const Scorer& scorer, const std::vector<AbductiveInstance>& dataset, std::uint64_t seed,
                    const BootstrapOptions& bootstrap = {});

std::string_view to_string(EvalTask task);
std::string report_to_json(const EvalReport& report);
// Columns: phenomenon, n, accuracy, ci_low, ci_high; six decimals.
std::string report_to_tsv(const EvalReport& report);

// Writes <prefix>.json and <prefix>.tsv atomically.
void write_report(const std::filesystem::path& prefix, const EvalReport& report);

}  // namespace lmscore
