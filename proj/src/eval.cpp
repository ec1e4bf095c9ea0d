#include "lmscore/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "lmscore/errors.hpp"
#include "lmscore/format.hpp"
#include "lmscore/random.hpp"
#include "lmscore/weights_io.hpp"

namespace lmscore {

using json = nlohmann::json;

namespace {

// Calls fn(line_number, line) for every non-blank line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (collapse_whitespace(line).empty()) continue;
    fn(line_no, line);
  }
}

json parse_object(std::size_t line_no, std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw FormatError("line " + std::to_string(line_no) + ": expected a JSON object");
  return j;
}

std::string required_string(const json& j, const char* field, std::size_t line_no) {
  if (!j.contains(field)) {
    throw FormatError("line " + std::to_string(line_no) + ": missing required field '" + field + "'");
  }
  const auto& v = j.at(field);
  if (!v.is_string()) {
    throw FormatError("line " + std::to_string(line_no) + ": field '" + field + "' must be a string");
  }
  std::string s = v.get<std::string>();
  if (collapse_whitespace(s).empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": field '" + field + "' is empty");
  }
  return s;
}

}  // namespace

std::vector<MinimalPair> parse_minimal_pairs(std::string_view jsonl) {
  std::vector<MinimalPair> pairs;
  std::set<std::string> seen;
  for_each_line(jsonl, [&](std::size_t line_no, std::string_view line) {
    const json j = parse_object(line_no, line);
    MinimalPair p;
    p.good = required_string(j, "sentence_good", line_no);
    p.bad = required_string(j, "sentence_bad", line_no);
    p.phenomenon = required_string(j, "linguistics_term", line_no);
    p.paradigm = required_string(j, "UID", line_no);
    std::string pair_id = std::to_string(line_no);
    if (j.contains("pairID")) {
      const auto& v = j.at("pairID");
      pair_id = v.is_string() ? v.get<std::string>() : v.dump();
    }
    p.uid = p.paradigm + "/" + pair_id;
    if (!seen.insert(p.uid).second) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate pair id '" + p.uid + "'");
    }
    pairs.push_back(std::move(p));
  });
  return pairs;
}

std::vector<MinimalPair> load_minimal_pairs(const std::filesystem::path& path) {
  try {
    return parse_minimal_pairs(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<AbductiveInstance> parse_abductive(std::string_view instances_jsonl, std::string_view labels) {
  std::vector<AbductiveInstance> out;
  for_each_line(instances_jsonl, [&](std::size_t line_no, std::string_view line) {
    const json j = parse_object(line_no, line);
    AbductiveInstance a;
    a.obs1 = required_string(j, "obs1", line_no);
    a.obs2 = required_string(j, "obs2", line_no);
    a.hyp1 = required_string(j, "hyp1", line_no);
    a.hyp2 = required_string(j, "hyp2", line_no);
    out.push_back(std::move(a));
  });
  std::vector<int> parsed;
  for_each_line(labels, [&](std::size_t line_no, std::string_view line) {
    const std::string s = collapse_whitespace(line);
    if (s != "1" && s != "2") {
      throw FormatError("labels line " + std::to_string(line_no) + ": label must be 1 or 2, got '" + s + "'");
    }
    parsed.push_back(s == "1" ? 1 : 2);
  });
  if (parsed.size() != out.size()) {
    throw FormatError("count mismatch: " + std::to_string(out.size()) + " instances but " +
                      std::to_string(parsed.size()) + " labels");
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].label = parsed[i];
  return out;
}

std::vector<AbductiveInstance> load_abductive(const std::filesystem::path& instances,
                                              const std::filesystem::path& labels) {
  return parse_abductive(read_file(instances), read_file(labels));
}

std::vector<ForcedChoice> forced_choice(const Scorer& scorer, const std::vector<MinimalPair>& pairs) {
  if (pairs.empty()) return {};
  ScoringRequest req;
  req.reduction = SequenceReduction::mean;
  req.sentences.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    req.sentences.push_back(p.good);
    req.sentences.push_back(p.bad);
  }
  const auto scores = scorer.sequence_score(req);
  std::vector<ForcedChoice> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ForcedChoice c;
    c.score_good = scores[2 * i].value;
    c.score_bad = scores[2 * i + 1].value;
    c.chose_good = c.score_good > c.score_bad;
    out.push_back(c);
  }
  return out;
}

ForcedChoice forced_choice(const Scorer& scorer, const MinimalPair& pair) {
  return forced_choice(scorer, std::vector<MinimalPair>{pair}).front();
}

std::vector<AbductiveChoice> abductive_select(const Scorer& scorer, const std::vector<AbductiveInstance>& instances) {
  if (instances.empty()) return {};
  std::vector<std::string> prefixes;
  std::vector<std::string> continuations;
  for (const auto& a : instances) {
    prefixes.push_back(a.obs1 + " " + a.hyp1);
    continuations.push_back(a.obs2);
    prefixes.push_back(a.obs1 + " " + a.hyp2);
    continuations.push_back(a.obs2);
  }
  const auto scores = scorer.partial_score(prefixes, continuations, SequenceReduction::sum);
  std::vector<AbductiveChoice> out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    AbductiveChoice c;
    c.score1 = scores[2 * i].value;
    c.score2 = scores[2 * i + 1].value;
    c.selected = c.score2 > c.score1 ? 2 : 1;
    out.push_back(c);
  }
  return out;
}

AbductiveChoice abductive_select(const Scorer& scorer, const AbductiveInstance& instance) {
  return abductive_select(scorer, std::vector<AbductiveInstance>{instance}).front();
}

namespace {

// Linear-interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

EvalReport aggregate(EvalTask task, const std::vector<std::pair<std::string, bool>>& outcomes, std::uint64_t seed,
                     const BootstrapOptions& bootstrap) {
  if (outcomes.empty()) throw InputError("cannot evaluate an empty dataset");
  if (bootstrap.resamples == 0 || !(bootstrap.confidence > 0.0 && bootstrap.confidence < 1.0)) {
    throw InputError("bootstrap needs at least one resample and a confidence in (0, 1)");
  }
  EvalReport report;
  report.task = task;
  report.seed = seed;
  report.n_total = outcomes.size();

  std::map<std::string, std::vector<bool>> by_group;
  for (const auto& [group, correct] : outcomes) {
    by_group[group].push_back(correct);
    report.n_correct += correct ? 1 : 0;
  }
  report.overall_accuracy = static_cast<double>(report.n_correct) / static_cast<double>(report.n_total);

  Rng rng(seed);
  const double alpha = 1.0 - bootstrap.confidence;
  for (const auto& [group, items] : by_group) {
    GroupResult g;
    g.n = items.size();
    g.correct = static_cast<std::size_t>(std::count(items.begin(), items.end(), true));
    g.accuracy = static_cast<double>(g.correct) / static_cast<double>(g.n);
    std::vector<double> stats(bootstrap.resamples);
    for (auto& stat : stats) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < g.n; ++i) hits += items[rng.uniform_index(g.n)] ? 1 : 0;
      stat = static_cast<double>(hits) / static_cast<double>(g.n);
    }
    std::sort(stats.begin(), stats.end());
    // The percentile interval can exclude the point estimate on tiny or
    // skewed groups; widen it so ci_low <= accuracy <= ci_high.
    g.ci_low = std::min(quantile(stats, alpha / 2.0), g.accuracy);
    g.ci_high = std::max(quantile(stats, 1.0 - alpha / 2.0), g.accuracy);
    report.groups.emplace(group, g);
  }
  return report;
}

EvalReport evaluate(const Scorer& scorer, const std::vector<MinimalPair>& dataset, std::uint64_t seed,
                    const BootstrapOptions& bootstrap) {
  if (dataset.empty()) throw InputError("cannot evaluate an empty dataset");
  const auto choices = forced_choice(scorer, dataset);
  std::vector<std::pair<std::string, bool>> outcomes;
  for (std::size_t i = 0; i < dataset.size(); ++i) outcomes.emplace_back(dataset[i].phenomenon, choices[i].chose_good);
  return aggregate(EvalTask::minimal_pair, outcomes, seed, bootstrap);
}

EvalReport evaluate(const Scorer& scorer, const std::vector<AbductiveInstance>& dataset, std::uint64_t seed,
                    const BootstrapOptions& bootstrap) {
  if (dataset.empty()) throw InputError("cannot evaluate an empty dataset");
  const auto choices = abductive_select(scorer, dataset);
  std::vector<std::pair<std::string, bool>> outcomes;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    outcomes.emplace_back(kAbductiveGroup, choices[i].selected == dataset[i].label);
  }
  return aggregate(EvalTask::abductive, outcomes, seed, bootstrap);
}

std::string_view to_string(EvalTask task) {
  return task == EvalTask::minimal_pair ? "minimal_pair" : "abductive";
}

std::string report_to_json(const EvalReport& report) {
  json j = json::object();
  j["task"] = std::string(to_string(report.task));
  j["overall_accuracy"] = report.overall_accuracy;
  j["n_correct"] = report.n_correct;
  j["n_total"] = report.n_total;
  j["seed"] = report.seed;
  json groups = json::array();
  for (const auto& [name, g] : report.groups) {
    json e = json::object();
    e["phenomenon"] = name;
    e["n"] = g.n;
    e["correct"] = g.correct;
    e["accuracy"] = g.accuracy;
    e["ci_low"] = g.ci_low;
    e["ci_high"] = g.ci_high;
    groups.push_back(std::move(e));
  }
  j["groups"] = std::move(groups);
  return j.dump(2) + "\n";
}

std::string report_to_tsv(const EvalReport& report) {
  std::string out = "phenomenon\tn\taccuracy\tci_low\tci_high\n";
  for (const auto& [name, g] : report.groups) {
    out += name + "\t" + std::to_string(g.n) + "\t" + format_fixed(g.accuracy) + "\t" + format_fixed(g.ci_low) +
           "\t" + format_fixed(g.ci_high) + "\n";
  }
  return out;
}

void write_report(const std::filesystem::path& prefix, const EvalReport& report) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  auto json_path = prefix;
  json_path += ".json";
  auto tsv_path = prefix;
  tsv_path += ".tsv";
  write_file_atomic(json_path, report_to_json(report));
  write_file_atomic(tsv_path, report_to_tsv(report));
}

}  // namespace lmscore
