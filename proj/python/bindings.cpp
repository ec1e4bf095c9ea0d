#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lmscore/cwe.hpp"
#include "lmscore/errors.hpp"
#include "lmscore/eval.hpp"
#include "lmscore/fixture.hpp"
#include "lmscore/scorer.hpp"
#include "lmscore/weights_io.hpp"

namespace py = pybind11;
using namespace lmscore;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) view(r, c) = m(r, c);
  }
  return out;
}

SequenceReduction reduction_of(const std::string& s) {
  if (s == "sum") return SequenceReduction::sum;
  if (s == "mean") return SequenceReduction::mean;
  throw InputError("reduction must be 'sum' or 'mean', got '" + s + "'");
}

ReductionKind pooling_of(const std::string& s) {
  if (s == "mean") return ReductionKind::mean;
  if (s == "first") return ReductionKind::first;
  if (s == "last") return ReductionKind::last;
  if (s == "sum") return ReductionKind::sum;
  throw InputError("pooling must be one of mean, first, last, sum; got '" + s + "'");
}

// None selects every layer; an int one layer; a sequence an ordered list.
LayerSpec layers_of(const py::object& layers) {
  if (layers.is_none()) return AllLayers{};
  if (py::isinstance<py::int_>(layers)) return layers.cast<std::size_t>();
  return layers.cast<std::vector<std::size_t>>();
}

SpanStimulus stimulus_of(const py::handle& item) {
  if (py::isinstance<py::str>(item)) return {item.cast<std::string>(), WholeSentence{}};
  const auto t = item.cast<py::tuple>();
  if (t.size() != 2) throw InputError("stimulus must be a sentence or a (sentence, target) pair");
  SpanStimulus s{t[0].cast<std::string>(), WholeSentence{}};
  if (t[1].is_none()) return s;
  if (py::isinstance<py::str>(t[1])) {
    s.target = t[1].cast<std::string>();
  } else {
    const auto span = t[1].cast<std::pair<std::size_t, std::size_t>>();
    s.target = CharSpan{span.first, span.second};
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_lmscore, m) {
  m.doc() = "Native core of lmscore";

  auto base = py::register_exception<Error>(m, "LmscoreError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ChecksumError>(m, "ChecksumError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<LookupError>(m, "SpanLookupError", base.ptr());
  py::register_exception<VocabularyError>(m, "VocabularyError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](const std::string& arch, std::size_t n_layers, std::size_t n_heads, std::size_t d_model,
                       std::size_t d_ff, std::size_t vocab_size, std::size_t max_seq_len) {
             ModelConfig c{parse_architecture(arch), n_layers, n_heads, d_model, d_ff ? d_ff : 4 * d_model,
                           vocab_size, max_seq_len};
             c.validate();
             return c;
           }),
           py::arg("architecture") = "causal", py::arg("n_layers") = 2, py::arg("n_heads") = 2,
           py::arg("d_model") = 16, py::arg("d_ff") = 0, py::arg("vocab_size") = 32, py::arg("max_seq_len") = 32)
      .def_property_readonly("architecture", [](const ModelConfig& c) { return std::string(to_string(c.architecture)); })
      .def_readonly("n_layers", &ModelConfig::n_layers)
      .def_readonly("n_heads", &ModelConfig::n_heads)
      .def_readonly("d_model", &ModelConfig::d_model)
      .def_readonly("d_ff", &ModelConfig::d_ff)
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("max_seq_len", &ModelConfig::max_seq_len)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  py::class_<LanguageModel>(m, "LanguageModel")
      .def_static(
          "load",
          [](const std::filesystem::path& dir, std::optional<std::string> arch) {
            std::optional<Architecture> a;
            if (arch) a = parse_architecture(*arch);
            return load_language_model(dir, a);
          },
          py::arg("model_dir"), py::arg("architecture") = py::none())
      .def("save", [](const LanguageModel& lm, const std::filesystem::path& dir) { save_language_model(dir, lm); })
      .def_property_readonly("config", [](const LanguageModel& lm) { return lm.model.config; })
      .def_property_readonly("architecture", [](const LanguageModel& lm) { return std::string(to_string(lm.architecture())); })
      .def_property_readonly("vocab", [](const LanguageModel& lm) { return lm.vocab.tokens(); })
      .def(
          "tokenize",
          [](const LanguageModel& lm, const std::string& text, bool add_special) {
            const Encoding enc = encode(lm.vocab, text, add_special);
            std::vector<std::string> out;
            for (const TokenId id : enc.ids) out.push_back(lm.vocab.token(id));
            return out;
          },
          py::arg("text"), py::arg("add_special") = false)
      .def(
          "log_probs",
          [](const LanguageModel& lm, const std::vector<TokenId>& ids) {
            const ForwardOutput f = forward(lm.model, ids);
            Matrix lp = f.logits;
            for (std::size_t r = 0; r < lp.rows; ++r) {
              const Vector row = log_probs(f.logits.row(r));
              std::copy(row.begin(), row.end(), lp.row(r).begin());
            }
            return to_numpy(lp);
          },
          py::arg("ids"));

  m.def(
      "make_fixture",
      [](const ModelConfig& config, std::uint64_t seed, const std::string& init, double init_std) {
        FixtureOptions o;
        o.config = config;
        o.seed = seed;
        o.init = init == "zero" ? FixtureInit::zero : FixtureInit::random;
        o.init_std = init_std;
        return make_fixture(o);
      },
      py::arg("config") = ModelConfig{}, py::arg("seed") = 42, py::arg("init") = "random", py::arg("init_std") = 0.2);

  py::class_<Scorer>(m, "Scorer")
      .def(py::init([](const LanguageModel& lm, bool add_special, std::size_t workers) {
             return Scorer(lm, ScorerOptions{add_special, workers});
           }),
           py::arg("model"), py::arg("add_special") = true, py::arg("workers") = 1, py::keep_alive<1, 2>())
      .def(
          "token_score",
          [](const Scorer& s, std::vector<std::string> sentences, const std::string& mode, bool rank) {
            ScoringRequest req;
            req.sentences = std::move(sentences);
            req.mode = mode == "surprisal" ? ScoreMode::surprisal : ScoreMode::logprob;
            req.want_rank = rank;
            const auto scores = s.token_score(req);
            py::list out;
            for (const auto& sentence : scores) {
              py::list row;
              for (const auto& t : sentence) {
                const double v = req.mode == ScoreMode::surprisal ? *t.surprisal : t.logprob;
                if (rank) row.append(py::make_tuple(t.token, v, t.rank ? py::cast(*t.rank) : py::none()));
                else row.append(py::make_tuple(t.token, v));
              }
              out.append(row);
            }
            return out;
          },
          py::arg("sentences"), py::arg("mode") = "logprob", py::arg("rank") = false)
      .def(
          "sequence_score",
          [](const Scorer& s, std::vector<std::string> sentences, const std::string& reduction) {
            ScoringRequest req;
            req.sentences = std::move(sentences);
            req.reduction = reduction_of(reduction);
            std::vector<double> out;
            for (const auto& r : s.sequence_score(req)) out.push_back(r.value);
            return out;
          },
          py::arg("sentences"), py::arg("reduction") = "sum")
      .def(
          "partial_score",
          [](const Scorer& s, const std::vector<std::string>& prefixes, const std::vector<std::string>& continuations,
             const std::string& reduction) {
            std::vector<double> out;
            for (const auto& r : s.partial_score(prefixes, continuations, reduction_of(reduction))) {
              out.push_back(r.value);
            }
            return out;
          },
          py::arg("prefixes"), py::arg("continuations"), py::arg("reduction") = "sum")
      .def(
          "get_predictions",
          [](const Scorer& s, const std::vector<std::string>& stimuli, std::size_t k) {
            std::vector<std::vector<std::pair<std::string, double>>> out;
            for (const auto& preds : s.get_predictions(stimuli, k)) {
              auto& row = out.emplace_back();
              for (const auto& p : preds) row.emplace_back(p.token, p.probability);
            }
            return out;
          },
          py::arg("stimuli"), py::arg("k") = 5)
      .def(
          "query_vocab",
          [](const Scorer& s, const std::vector<std::string>& stimuli, const std::vector<std::string>& vocab) {
            std::vector<std::vector<std::tuple<std::string, double, std::size_t>>> out;
            for (const auto& qs : s.query_vocab(stimuli, vocab)) {
              auto& row = out.emplace_back();
              for (const auto& q : qs) row.emplace_back(q.token, q.probability, q.rank);
            }
            return out;
          },
          py::arg("stimuli"), py::arg("vocab"));

  m.def(
      "extract_representation",
      [](const LanguageModel& lm, const py::iterable& stimuli, const py::object& layers, const std::string& pooling,
         std::size_t workers) {
        std::vector<SpanStimulus> items;
        for (const auto item : stimuli) items.push_back(stimulus_of(item));
        const auto mats = extract_representation(lm, items, layers_of(layers), pooling_of(pooling), workers);
        py::list out;
        for (const auto& mat : mats) out.append(to_numpy(mat));
        return out;
      },
      py::arg("model"), py::arg("stimuli"), py::arg("layers") = py::none(), py::arg("pooling") = "mean",
      py::arg("workers") = 1);

  m.def(
      "evaluate_minimal_pairs",
      [](const Scorer& scorer, const std::filesystem::path& path, std::uint64_t seed) {
        return report_to_json(evaluate(scorer, load_minimal_pairs(path), seed));
      },
      py::arg("scorer"), py::arg("path"), py::arg("seed") = 42);
  m.def(
      "evaluate_abductive",
      [](const Scorer& scorer, const std::filesystem::path& instances, const std::filesystem::path& labels,
         std::uint64_t seed) { return report_to_json(evaluate(scorer, load_abductive(instances, labels), seed)); },
      py::arg("scorer"), py::arg("instances"), py::arg("labels"), py::arg("seed") = 42);
}
