#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmscore/cwe.hpp"
#include "lmscore/errors.hpp"
#include "lmscore/eval.hpp"
#include "lmscore/fixture.hpp"
#include "lmscore/format.hpp"
#include "lmscore/scorer.hpp"
#include "lmscore/trainer.hpp"
#include "lmscore/weights_io.hpp"

namespace lmscore::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutputFormat { tsv, json };

struct ModelArgs {
  std::string model_dir;
  std::string arch;  // empty: keep the stored architecture
  std::size_t batch_size = 8;
  std::size_t workers = 1;
  bool no_special = false;
  std::string format = "tsv";
};

struct InputArgs {
  std::vector<std::string> sentences;
  bool from_stdin = false;
};

void add_model_options(CLI::App* sub, ModelArgs& m) {
  sub->add_option("--model-dir", m.model_dir, "Directory holding vocab.txt, config.json, model.bin")
      ->envname("LMSCORE_MODEL_DIR");
  sub->add_option("--arch", m.arch, "Override the stored architecture")
      ->check(CLI::IsMember({"causal", "bidirectional"}));
  sub->add_option("--batch-size", m.batch_size, "Sentences per scoring call")->check(CLI::PositiveNumber);
  sub->add_option("--workers", m.workers, "Threads for independent forward passes")->check(CLI::PositiveNumber);
  sub->add_flag("--no-special", m.no_special, "Do not wrap inputs in bos/eos");
  sub->add_option("--format", m.format, "Output format")->check(CLI::IsMember({"tsv", "json"}));
}

void add_input_options(CLI::App* sub, InputArgs& in, const char* what) {
  sub->add_option("inputs", in.sentences, what);
  sub->add_flag("--stdin", in.from_stdin, "Read one input per line from standard input");
}

std::vector<std::string> gather_inputs(const InputArgs& args, std::istream& in) {
  std::vector<std::string> out = args.sentences;
  if (args.from_stdin) {
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!collapse_whitespace(line).empty()) out.push_back(line);
    }
  }
  if (out.empty()) throw UsageError("no input sentences (pass them as arguments or use --stdin)");
  return out;
}

LanguageModel load(const ModelArgs& m) {
  if (m.model_dir.empty()) throw UsageError("--model-dir is required (or set LMSCORE_MODEL_DIR)");
  std::optional<Architecture> arch;
  if (!m.arch.empty()) arch = parse_architecture(m.arch);
  return load_language_model(m.model_dir, arch);
}

ScorerOptions scorer_options(const ModelArgs& m) {
  ScorerOptions o;
  o.add_special = !m.no_special;
  o.workers = m.workers;
  return o;
}

bool is_json(const ModelArgs& m) { return m.format == "json"; }

// Scores `items` in chunks of batch_size, concatenating results in order.
template <typename T, typename Fn>
auto in_batches(const std::vector<T>& items, std::size_t batch_size, Fn&& fn) {
  using Result = decltype(fn(items));
  Result all;
  for (std::size_t i = 0; i < items.size(); i += batch_size) {
    const auto end = std::min(items.size(), i + batch_size);
    std::vector<T> chunk(items.begin() + static_cast<std::ptrdiff_t>(i), items.begin() + static_cast<std::ptrdiff_t>(end));
    auto part = fn(chunk);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

SequenceReduction parse_reduction(const std::string& s) {
  return s == "mean" ? SequenceReduction::mean : SequenceReduction::sum;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  ModelArgs model;
  InputArgs input;
  std::string mode = "logprob";
  bool rank = false;
};

int cmd_score(const ScoreArgs& a, std::istream& in, std::ostream& out) {
  const auto sentences = gather_inputs(a.input, in);
  const LanguageModel lm = load(a.model);
  const Scorer scorer(lm, scorer_options(a.model));
  const auto scores = in_batches(sentences, a.model.batch_size, [&](const std::vector<std::string>& chunk) {
    ScoringRequest req;
    req.sentences = chunk;
    req.mode = a.mode == "surprisal" ? ScoreMode::surprisal : ScoreMode::logprob;
    req.want_rank = a.rank;
    return scorer.token_score(req);
  });
  const bool surprisal = a.mode == "surprisal";
  auto value = [&](const TokenScore& t) { return surprisal ? *t.surprisal : t.logprob; };
  if (is_json(a.model)) {
    out << "[\n";
    for (std::size_t s = 0; s < scores.size(); ++s) {
      out << "  {\"sentence_index\": " << s << ", \"tokens\": [";
      for (std::size_t i = 0; i < scores[s].size(); ++i) {
        const auto& t = scores[s][i];
        out << (i ? ", " : "") << "{\"token\": " << json_string(t.token)
            << ", \"score\": " << (t.placeholder ? "null" : format_fixed(value(t)));
        if (a.rank) out << ", \"rank\": " << (t.placeholder ? "null" : std::to_string(*t.rank));
        out << "}";
      }
      out << "]}" << (s + 1 < scores.size() ? "," : "") << "\n";
    }
    out << "]\n";
    return kExitOk;
  }
  out << "sentence_index\ttoken\t" << (surprisal ? "surprisal" : "logprob") << (a.rank ? "\trank" : "") << "\n";
  for (std::size_t s = 0; s < scores.size(); ++s) {
    for (const auto& t : scores[s]) {
      out << s << "\t" << t.token << "\t" << (t.placeholder ? "NaN" : format_fixed(value(t)));
      if (a.rank) out << "\t" << (t.placeholder ? "NaN" : std::to_string(*t.rank));
      out << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sequence / partial

void print_sequence_scores(const std::vector<SequenceScore>& scores, bool json, std::ostream& out) {
  if (json) {
    out << "[\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out << "  {\"index\": " << i << ", \"n_scored_tokens\": " << scores[i].n_scored_tokens
          << ", \"score\": " << format_fixed(scores[i].value) << "}" << (i + 1 < scores.size() ? "," : "") << "\n";
    }
    out << "]\n";
    return;
  }
  out << "index\tn_scored_tokens\tscore\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << "\t" << scores[i].n_scored_tokens << "\t" << format_fixed(scores[i].value) << "\n";
  }
}

struct SequenceArgs {
  ModelArgs model;
  InputArgs input;
  std::string reduction = "sum";
};

int cmd_sequence(const SequenceArgs& a, std::istream& in, std::ostream& out) {
  const auto sentences = gather_inputs(a.input, in);
  const LanguageModel lm = load(a.model);
  const Scorer scorer(lm, scorer_options(a.model));
  const auto scores = in_batches(sentences, a.model.batch_size, [&](const std::vector<std::string>& chunk) {
    ScoringRequest req;
    req.sentences = chunk;
    req.reduction = parse_reduction(a.reduction);
    return scorer.sequence_score(req);
  });
  print_sequence_scores(scores, is_json(a.model), out);
  return kExitOk;
}

struct PartialArgs {
  ModelArgs model;
  std::vector<std::string> prefixes;
  std::vector<std::string> continuations;
  bool from_stdin = false;
  std::string reduction = "sum";
};

int cmd_partial(const PartialArgs& a, std::istream& in, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (a.prefixes.size() != a.continuations.size()) {
    throw UsageError("--prefix and --continuation must be given the same number of times");
  }
  for (std::size_t i = 0; i < a.prefixes.size(); ++i) pairs.emplace_back(a.prefixes[i], a.continuations[i]);
  if (a.from_stdin) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (collapse_whitespace(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw FormatError("stdin line " + std::to_string(line_no) + ": expected 'prefix<TAB>continuation'");
      }
      pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  if (pairs.empty()) throw UsageError("no prefix/continuation pairs given");
  const LanguageModel lm = load(a.model);
  const Scorer scorer(lm, scorer_options(a.model));
  const auto scores = in_batches(pairs, a.model.batch_size, [&](const auto& chunk) {
    std::vector<std::string> p, c;
    for (const auto& [x, y] : chunk) {
      p.push_back(x);
      c.push_back(y);
    }
    return scorer.partial_score(p, c, parse_reduction(a.reduction));
  });
  print_sequence_scores(scores, is_json(a.model), out);
  return kExitOk;
}

// ---------------------------------------------------------------- predictions / query-vocab

struct PredictionArgs {
  ModelArgs model;
  InputArgs input;
  std::size_t k = 5;
};

int cmd_predictions(const PredictionArgs& a, std::istream& in, std::ostream& out) {
  const auto stimuli = gather_inputs(a.input, in);
  const LanguageModel lm = load(a.model);
  const Scorer scorer(lm, scorer_options(a.model));
  const auto preds = in_batches(stimuli, a.model.batch_size,
                                [&](const std::vector<std::string>& chunk) { return scorer.get_predictions(chunk, a.k); });
  if (is_json(a.model)) {
    out << "[\n";
    for (std::size_t s = 0; s < preds.size(); ++s) {
      out << "  [";
      for (std::size_t i = 0; i < preds[s].size(); ++i) {
        out << (i ? ", " : "") << "{\"token\": " << json_string(preds[s][i].token)
            << ", \"probability\": " << format_fixed(preds[s][i].probability) << "}";
      }
      out << "]" << (s + 1 < preds.size() ? "," : "") << "\n";
    }
    out << "]\n";
    return kExitOk;
  }
  out << "stimulus_index\tposition\ttoken\tprobability\n";
  for (std::size_t s = 0; s < preds.size(); ++s) {
    for (std::size_t i = 0; i < preds[s].size(); ++i) {
      out << s << "\t" << i + 1 << "\t" << preds[s][i].token << "\t" << format_fixed(preds[s][i].probability) << "\n";
    }
  }
  return kExitOk;
}

struct QueryArgs {
  ModelArgs model;
  InputArgs input;
  std::vector<std::string> vocab;
};

int cmd_query_vocab(const QueryArgs& a, std::istream& in, std::ostream& out) {
  const auto stimuli = gather_inputs(a.input, in);
  if (a.vocab.empty()) throw UsageError("--vocab needs at least one token");
  const LanguageModel lm = load(a.model);
  const Scorer scorer(lm, scorer_options(a.model));
  const auto rows = in_batches(stimuli, a.model.batch_size,
                               [&](const std::vector<std::string>& chunk) { return scorer.query_vocab(chunk, a.vocab); });
  if (is_json(a.model)) {
    out << "[\n";
    for (std::size_t s = 0; s < rows.size(); ++s) {
      out << "  [";
      for (std::size_t i = 0; i < rows[s].size(); ++i) {
        out << (i ? ", " : "") << "{\"token\": " << json_string(rows[s][i].token)
            << ", \"probability\": " << format_fixed(rows[s][i].probability) << ", \"rank\": " << rows[s][i].rank
            << "}";
      }
      out << "]" << (s + 1 < rows.size() ? "," : "") << "\n";
    }
    out << "]\n";
    return kExitOk;
  }
  out << "stimulus_index\ttoken\tprobability\trank\n";
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (const auto& q : rows[s]) {
      out << s << "\t" << q.token << "\t" << format_fixed(q.probability) << "\t" << q.rank << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  ModelArgs model;
  std::string stimuli_path;
  std::string layers = "all";
  std::string reduction = "mean";
};

LayerSpec parse_layers(const std::string& spec) {
  if (spec == "all") return AllLayers{};
  std::vector<std::size_t> layers;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("invalid --layers value '" + spec + "' (expected 'all' or comma-separated indices)");
    }
    layers.push_back(std::stoul(item));
  }
  if (layers.empty()) throw UsageError("--layers is empty");
  if (layers.size() == 1) return layers.front();
  return layers;
}

// TSV line: sentence [TAB target]. Target is a word, "start:end" for a byte
// span, or absent/empty for the whole sentence.
SpanStimulus parse_stimulus(const std::string& line, std::size_t line_no) {
  SpanStimulus s;
  const auto tab = line.find('\t');
  s.sentence = line.substr(0, tab);
  const std::string target = tab == std::string::npos ? "" : line.substr(tab + 1);
  if (target.empty()) {
    s.target = WholeSentence{};
    return s;
  }
  const auto colon = target.find(':');
  if (colon != std::string::npos && colon > 0 && colon + 1 < target.size() &&
      target.find_first_not_of("0123456789:") == std::string::npos && target.find(':', colon + 1) == std::string::npos) {
    s.target = CharSpan{std::stoul(target.substr(0, colon)), std::stoul(target.substr(colon + 1))};
    return s;
  }
  if (target.find_first_of(" \t") != std::string::npos) {
    throw FormatError("stimuli line " + std::to_string(line_no) + ": target must be a single word or start:end");
  }
  s.target = target;
  return s;
}

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const LayerSpec layers = parse_layers(a.layers);
  ReductionKind reduction = ReductionKind::mean;
  if (a.reduction == "first") reduction = ReductionKind::first;
  else if (a.reduction == "last") reduction = ReductionKind::last;
  else if (a.reduction == "sum") reduction = ReductionKind::sum;

  std::vector<SpanStimulus> stimuli;
  {
    const std::string text = read_file(a.stimuli_path);
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (collapse_whitespace(line).empty()) continue;
      stimuli.push_back(parse_stimulus(line, line_no));
    }
  }
  if (stimuli.empty()) throw FormatError("stimuli file " + a.stimuli_path + " is empty");

  const LanguageModel lm = load(a.model);
  const auto selected = resolve_layers(layers, lm.model.config.n_layers);
  const auto reps = extract_representation(lm, stimuli, layers, reduction, a.model.workers);
  const std::size_t d = lm.model.config.d_model;
  if (is_json(a.model)) {
    out << "[\n";
    bool first = true;
    for (std::size_t s = 0; s < stimuli.size(); ++s) {
      for (std::size_t li = 0; li < selected.size(); ++li) {
        out << (first ? "" : ",\n") << "  {\"stimulus_index\": " << s << ", \"layer\": " << selected[li]
            << ", \"vector\": [";
        for (std::size_t c = 0; c < d; ++c) out << (c ? ", " : "") << format_fixed(reps[li](s, c));
        out << "]}";
        first = false;
      }
    }
    out << "\n]\n";
    return kExitOk;
  }
  out << "stimulus_index\tlayer";
  for (std::size_t c = 0; c < d; ++c) out << "\td" << c;
  out << "\n";
  for (std::size_t s = 0; s < stimuli.size(); ++s) {
    for (std::size_t li = 0; li < selected.size(); ++li) {
      out << s << "\t" << selected[li];
      for (std::size_t c = 0; c < d; ++c) out << "\t" << format_fixed(reps[li](s, c));
      out << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  ModelArgs model;
  std::string task;
  std::vector<std::string> data;
  std::string report;
  std::uint64_t seed = 42;
  std::size_t resamples = 1000;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  EvalReport report;
  if (a.task == "blimp") {
    if (a.data.size() != 1) throw UsageError("--task blimp takes one --data file");
    const auto pairs = load_minimal_pairs(a.data[0]);
    const LanguageModel lm = load(a.model);
    const Scorer scorer(lm, scorer_options(a.model));
    report = evaluate(scorer, pairs, a.seed, {a.resamples, 0.95});
  } else {
    if (a.data.size() != 2) throw UsageError("--task anli takes two --data files: instances.jsonl labels.lst");
    const auto instances = load_abductive(a.data[0], a.data[1]);
    const LanguageModel lm = load(a.model);
    const Scorer scorer(lm, scorer_options(a.model));
    report = evaluate(scorer, instances, a.seed, {a.resamples, 0.95});
  }
  if (!a.report.empty()) write_report(a.report, report);
  for (const auto& [name, g] : report.groups) {
    out << "group=" << name << "\tn=" << g.n << "\taccuracy=" << format_fixed(g.accuracy)
        << "\tci=[" << format_fixed(g.ci_low) << ", " << format_fixed(g.ci_high) << "]\n";
  }
  out << "accuracy=" << format_fixed(report.overall_accuracy) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- make-fixture

struct FixtureArgs {
  std::string arch = "causal";
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 16;
  std::size_t d_ff = 0;  // 0: 4 * d_model
  std::size_t vocab_size = 32;
  std::size_t max_seq_len = 32;
  std::uint64_t seed = 42;
  std::string init = "random";
  double init_std = 0.2;
  std::string out_dir;
  std::string train_path;
  std::size_t steps = 1000;
  double lr = 1e-2;
  std::size_t train_batch = 16;
  std::string emit_agreement;
  std::size_t n_train = 2000;
  std::size_t n_held_out = 500;
};

std::string write_jsonl_pairs(const std::vector<MinimalPair>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    out += "{\"sentence_good\": " + json_string(p.good) + ", \"sentence_bad\": " + json_string(p.bad) +
           ", \"field\": \"syntax\", \"linguistics_term\": " + json_string(p.phenomenon) +
           ", \"UID\": " + json_string(p.paradigm) + ", \"pairID\": \"" + std::to_string(i) + "\"}\n";
  }
  return out;
}

int cmd_make_fixture(const FixtureArgs& a, std::ostream& out) {
  if (a.emit_agreement.empty() && a.out_dir.empty()) throw UsageError("--out (or --emit-agreement) is required");
  if (!a.emit_agreement.empty()) {
    const auto split = make_agreement_split(AgreementGrammar::standard(), a.n_train, a.n_held_out, a.seed);
    const std::filesystem::path dir = a.emit_agreement;
    std::filesystem::create_directories(dir);
    std::string corpus;
    for (const auto& s : split.train) corpus += s + "\n";
    write_file_atomic(dir / "agreement_train.txt", corpus);
    write_file_atomic(dir / "agreement_heldout.jsonl", write_jsonl_pairs(split.held_out));
    out << "wrote " << split.train.size() << " training sentences and " << split.held_out.size()
        << " held-out pairs to " << dir.string() << "\n";
    if (a.out_dir.empty()) return kExitOk;
  }
  FixtureOptions opts;
  opts.config.architecture = parse_architecture(a.arch);
  opts.config.n_layers = a.layers;
  opts.config.n_heads = a.heads;
  opts.config.d_model = a.d_model;
  opts.config.d_ff = a.d_ff ? a.d_ff : 4 * a.d_model;
  opts.config.vocab_size = a.vocab_size;
  opts.config.max_seq_len = a.max_seq_len;
  opts.seed = a.seed;
  opts.init = a.init == "zero" ? FixtureInit::zero : FixtureInit::random;
  opts.init_std = a.init_std;
  try {
    opts.config.validate();
    fixture_vocabulary(a.vocab_size);
    if (!(a.init_std > 0.0)) throw ConfigError("--init-std must be positive");
    if (!(a.lr > 0.0)) throw ConfigError("--lr must be positive");
    if (a.train_batch == 0) throw ConfigError("--train-batch must be positive");
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  LanguageModel lm = make_fixture(opts);
  if (!a.train_path.empty()) {
    std::vector<std::string> corpus;
    std::stringstream ss(read_file(a.train_path));
    std::string line;
    while (std::getline(ss, line)) {
      if (!collapse_whitespace(line).empty()) corpus.push_back(line);
    }
    TrainOptions t;
    t.steps = a.steps;
    t.lr = a.lr;
    t.batch_size = a.train_batch;
    t.seed = a.seed;
    const TrainStats stats = train(lm, corpus, t);
    round_to_float(lm.model.weights);
    out << "trained " << a.steps << " steps on " << corpus.size() << " sentences: initial_loss="
        << format_fixed(stats.initial_loss) << " final_loss=" << format_fixed(corpus_loss(lm, corpus)) << "\n";
  }
  save_language_model(a.out_dir, lm);
  out << "wrote " << to_string(lm.architecture()) << " fixture (V=" << lm.vocab.size() << ", layers="
      << opts.config.n_layers << ", d_model=" << opts.config.d_model << ") to " << a.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"lmscore: score, probe and evaluate transformer language models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  ScoreArgs score;
  auto* s_score = app.add_subcommand("score", "Per-token log-probabilities or surprisals");
  add_model_options(s_score, score.model);
  add_input_options(s_score, score.input, "Sentences to score");
  s_score->add_option("--mode", score.mode)->check(CLI::IsMember({"logprob", "surprisal"}));
  s_score->add_flag("--rank", score.rank, "Also report each token's rank");

  SequenceArgs seq;
  auto* s_seq = app.add_subcommand("sequence", "Sentence-level scores");
  add_model_options(s_seq, seq.model);
  add_input_options(s_seq, seq.input, "Sentences to score");
  s_seq->add_option("--reduction", seq.reduction)->check(CLI::IsMember({"sum", "mean"}));

  PartialArgs partial;
  auto* s_partial = app.add_subcommand("partial", "Continuation scores conditioned on a prefix");
  add_model_options(s_partial, partial.model);
  s_partial->add_option("--prefix", partial.prefixes, "Conditioning prefix (repeatable)")->allow_extra_args(false);
  s_partial->add_option("--continuation", partial.continuations, "Scored continuation (repeatable)")->allow_extra_args(false);
  s_partial->add_flag("--stdin", partial.from_stdin, "Read 'prefix<TAB>continuation' lines from stdin");
  s_partial->add_option("--reduction", partial.reduction)->check(CLI::IsMember({"sum", "mean"}));

  PredictionArgs pred;
  auto* s_pred = app.add_subcommand("predictions", "Top-k tokens at the mask position");
  add_model_options(s_pred, pred.model);
  add_input_options(s_pred, pred.input, "Stimuli containing one mask token");
  s_pred->add_option("-k,--top-k", pred.k)->check(CLI::PositiveNumber);

  QueryArgs query;
  auto* s_query = app.add_subcommand("query-vocab", "Probabilities and ranks of chosen tokens at the mask");
  add_model_options(s_query, query.model);
  add_input_options(s_query, query.input, "Stimuli containing one mask token");
  s_query->add_option("--vocab", query.vocab, "Restricted vocabulary")->delimiter(',')->allow_extra_args(false)->required();

  ExtractArgs extract;
  auto* s_extract = app.add_subcommand("extract", "Contextual embeddings as TSV");
  add_model_options(s_extract, extract.model);
  s_extract->add_option("--stimuli", extract.stimuli_path, "TSV: sentence[<TAB>word|start:end]")->required();
  s_extract->add_option("--layers", extract.layers, "'all', an index, or comma-separated indices");
  s_extract->add_option("--reduction", extract.reduction)->check(CLI::IsMember({"mean", "first", "last", "sum"}));

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Minimal-pair or abductive evaluation");
  add_model_options(s_eval, ev.model);
  s_eval->add_option("--task", ev.task)->required()->check(CLI::IsMember({"blimp", "anli"}));
  s_eval->add_option("--data", ev.data, "blimp: pairs.jsonl; anli: instances.jsonl labels.lst")->expected(1, 2)->required();
  s_eval->add_option("--report", ev.report, "Write <report>.json and <report>.tsv");
  s_eval->add_option("--seed", ev.seed, "Bootstrap seed");
  s_eval->add_option("--resamples", ev.resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);

  FixtureArgs fx;
  auto* s_fx = app.add_subcommand("make-fixture", "Write a deterministic fixture model");
  s_fx->add_option("--arch", fx.arch)->check(CLI::IsMember({"causal", "bidirectional"}));
  s_fx->add_option("--layers", fx.layers);
  s_fx->add_option("--heads", fx.heads);
  s_fx->add_option("--d-model", fx.d_model);
  s_fx->add_option("--d-ff", fx.d_ff, "Feed-forward width (default 4 * d_model)");
  s_fx->add_option("--vocab-size", fx.vocab_size);
  s_fx->add_option("--max-seq-len", fx.max_seq_len);
  s_fx->add_option("--seed", fx.seed);
  s_fx->add_option("--init", fx.init)->check(CLI::IsMember({"random", "zero"}));
  s_fx->add_option("--init-std", fx.init_std);
  s_fx->add_option("--out", fx.out_dir, "Output model directory");
  s_fx->add_option("--train", fx.train_path, "Corpus (one sentence per line) to train on");
  s_fx->add_option("--steps", fx.steps);
  s_fx->add_option("--lr", fx.lr);
  s_fx->add_option("--train-batch", fx.train_batch);
  s_fx->add_option("--emit-agreement", fx.emit_agreement, "Write agreement-grammar train/held-out data here");
  s_fx->add_option("--n-train", fx.n_train);
  s_fx->add_option("--n-heldout", fx.n_held_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (s_score->parsed()) return cmd_score(score, in, out);
    if (s_seq->parsed()) return cmd_sequence(seq, in, out);
    if (s_partial->parsed()) return cmd_partial(partial, in, out);
    if (s_pred->parsed()) return cmd_predictions(pred, in, out);
    if (s_query->parsed()) return cmd_query_vocab(query, in, out);
    if (s_extract->parsed()) return cmd_extract(extract, out);
    if (s_eval->parsed()) return cmd_eval(ev, out);
    if (s_fx->parsed()) return cmd_make_fixture(fx, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lmscore::Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace lmscore::cli
