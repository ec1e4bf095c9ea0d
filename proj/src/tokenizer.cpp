#include "lmscore/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lmscore/errors.hpp"

namespace lmscore {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), is_space);
}

constexpr std::string_view kSpecialHeader = "#special ";

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens, SpecialIds special,
                       std::string continuation_prefix)
    : tokens_(std::move(tokens)),
      special_(special),
      continuation_prefix_(std::move(continuation_prefix)) {
  id_of_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] = id_of_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw FormatError("duplicate token '" + tokens_[i] + "' at id " + std::to_string(i) +
                        " (first seen at id " + std::to_string(it->second) + ")");
    }
  }
  validate();
}

void Vocabulary::validate() const {
  const TokenId v = static_cast<TokenId>(tokens_.size());
  const std::pair<const char*, TokenId> named[] = {{"bos", special_.bos},
                                                   {"eos", special_.eos},
                                                   {"mask", special_.mask},
                                                   {"pad", special_.pad},
                                                   {"unk", special_.unk}};
  for (const auto& [name, id] : named) {
    if (id < 0 || id >= v) {
      throw FormatError(std::string("special token '") + name + "' is not declared");
    }
  }
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      if (named[i].second == named[j].second) {
        throw FormatError(std::string("special tokens '") + named[i].first + "' and '" +
                          named[j].first + "' share an id");
      }
    }
  }
  for (const auto& t : tokens_) {
    if (t.empty() || has_space(t)) {
      throw FormatError("token '" + t + "' is empty or contains whitespace");
    }
  }
  if (continuation_prefix_.empty()) {
    throw FormatError("continuation prefix must be non-empty");
  }
}

Vocabulary Vocabulary::parse(std::string_view contents) {
  std::vector<std::string> tokens;
  SpecialIds special;
  bool in_header = true;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const std::string where = "vocabulary line " + std::to_string(line_no);
    if (line.find('\r') != std::string_view::npos) {
      throw FormatError(where + ": CR line endings are not accepted");
    }
    if (line.empty()) {
      throw FormatError(where + ": empty line");
    }
    if (line.substr(0, kSpecialHeader.size()) == kSpecialHeader) {
      if (!in_header) {
        throw FormatError(where + ": #special declaration after token lines");
      }
      std::istringstream fields{std::string(line.substr(kSpecialHeader.size()))};
      std::string name, surface, extra;
      if (!(fields >> name >> surface) || (fields >> extra)) {
        throw FormatError(where + ": expected '#special <name> <token>'");
      }
      TokenId* slot = nullptr;
      if (name == "bos") slot = &special.bos;
      else if (name == "eos") slot = &special.eos;
      else if (name == "mask") slot = &special.mask;
      else if (name == "pad") slot = &special.pad;
      else if (name == "unk") slot = &special.unk;
      else throw FormatError(where + ": unknown special name '" + name + "'");
      if (*slot >= 0) {
        throw FormatError(where + ": special '" + name + "' declared twice");
      }
      *slot = static_cast<TokenId>(tokens.size());
      tokens.emplace_back(surface);
      continue;
    }
    in_header = false;
    if (has_space(line)) {
      throw FormatError(where + ": token contains whitespace");
    }
    tokens.emplace_back(line);
  }
  if (tokens.empty()) {
    throw FormatError("vocabulary is empty: no special tokens declared");
  }
  return Vocabulary(std::move(tokens), special);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open vocabulary file " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Vocabulary::serialize() const {
  std::string out;
  const std::pair<const char*, TokenId> named[] = {{"bos", special_.bos},
                                                   {"eos", special_.eos},
                                                   {"mask", special_.mask},
                                                   {"pad", special_.pad},
                                                   {"unk", special_.unk}};
  // Header lines must come first, so specials have to occupy the lowest ids.
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    const auto it = std::find_if(std::begin(named), std::end(named), [&](const auto& p) {
      return p.second == static_cast<TokenId>(id);
    });
    if (it != std::end(named)) {
      out += std::string(kSpecialHeader) + it->first + " " + tokens_[id] + "\n";
    } else {
      if (id < 5) {
        throw FormatError("cannot serialize: special tokens must occupy ids 0..4");
      }
      out += tokens_[id] + "\n";
    }
  }
  return out;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = id_of_.find(std::string(token));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_special(TokenId id) const {
  return id == special_.unk || is_structural(id);
}

bool Vocabulary::is_structural(TokenId id) const {
  return id == special_.bos || id == special_.eos || id == special_.mask || id == special_.pad;
}

std::size_t Encoding::content_position(std::size_t i) const {
  std::size_t seen = 0;
  for (std::size_t p = 0; p < special_mask.size(); ++p) {
    if (special_mask[p]) continue;
    if (seen == i) return p;
    ++seen;
  }
  throw InputError("content index " + std::to_string(i) + " out of range");
}

std::optional<CharSpan> Encoding::offset_at(std::size_t position) const {
  if (position >= special_mask.size() || special_mask[position]) return std::nullopt;
  std::size_t k = 0;
  for (std::size_t p = 0; p < position; ++p) {
    if (!special_mask[p]) ++k;
  }
  return offsets[k];
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  for (const auto& span : word_spans(text)) {
    if (!out.empty()) out += ' ';
    out.append(text.substr(span.start, span.end - span.start));
  }
  return out;
}

std::vector<CharSpan> word_spans(std::string_view text) {
  std::vector<CharSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    spans.push_back({start, i});
  }
  return spans;
}

namespace {

void push_token(Encoding& enc, TokenId id, std::optional<CharSpan> span) {
  enc.ids.push_back(id);
  enc.special_mask.push_back(!span.has_value());
  if (span) enc.offsets.push_back(*span);
}

std::optional<TokenId> find_piece(const Vocabulary& vocab, const std::string& piece) {
  const auto id = vocab.find(piece);
  if (id && !vocab.is_special(*id)) return id;
  return std::nullopt;
}

void segment_word(const Vocabulary& vocab, std::string_view text, CharSpan word, Encoding& enc) {
  const std::string_view w = text.substr(word.start, word.end - word.start);
  // Surface forms of structural specials are recognized as whole words; the
  // unk surface maps to unk like any other content token.
  if (const auto id = vocab.find(w)) {
    if (vocab.is_structural(*id)) {
      push_token(enc, *id, std::nullopt);
      return;
    }
    if (*id == vocab.special().unk) {
      push_token(enc, *id, word);
      return;
    }
  }
  const std::string& prefix = vocab.continuation_prefix();
  std::size_t pos = 0;
  while (pos < w.size()) {
    std::optional<TokenId> match;
    std::size_t match_len = 0;
    for (std::size_t len = w.size() - pos; len > 0; --len) {
      std::string piece(w.substr(pos, len));
      if (pos > 0) piece = prefix + piece;
      if (auto id = find_piece(vocab, piece)) {
        match = id;
        match_len = len;
        break;
      }
    }
    if (!match) {
      push_token(enc, vocab.special().unk, CharSpan{word.start + pos, word.end});
      return;
    }
    push_token(enc, *match, CharSpan{word.start + pos, word.start + pos + match_len});
    pos += match_len;
  }
}

}  // namespace

Encoding encode(const Vocabulary& vocab, std::string_view text, bool add_special) {
  const auto words = word_spans(text);
  if (words.empty()) {
    throw InputError("cannot encode empty text");
  }
  Encoding enc;
  enc.source = std::string(text);
  if (add_special) push_token(enc, vocab.special().bos, std::nullopt);
  for (const auto& w : words) segment_word(vocab, text, w, enc);
  if (add_special) push_token(enc, vocab.special().eos, std::nullopt);
  return enc;
}

std::string decode(const Vocabulary& vocab, const std::vector<TokenId>& ids) {
  std::string out;
  const std::string& prefix = vocab.continuation_prefix();
  const auto& sp = vocab.special();
  for (const TokenId id : ids) {
    if (id == sp.bos || id == sp.eos || id == sp.pad) continue;
    const std::string& t = vocab.token(id);
    if (!vocab.is_special(id) && t.size() > prefix.size() && t.compare(0, prefix.size(), prefix) == 0 &&
        !out.empty()) {
      out.append(t, prefix.size());
      continue;
    }
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

CharSpan find_word(std::string_view source, std::string_view word) {
  for (const auto& span : word_spans(source)) {
    if (source.substr(span.start, span.end - span.start) == word) return span;
  }
  throw LookupError("word '" + std::string(word) + "' does not occur in '" + std::string(source) + "'");
}

TokenRange resolve_span(const Encoding& enc, const SpanTarget& target) {
  CharSpan span;
  if (const auto* word = std::get_if<std::string>(&target)) {
    span = find_word(enc.source, *word);
  } else {
    span = std::get<CharSpan>(target);
    if (span.start >= span.end || span.end > enc.source.size()) {
      throw LookupError("invalid character span (" + std::to_string(span.start) + ", " +
                        std::to_string(span.end) + ") for text of length " +
                        std::to_string(enc.source.size()));
    }
  }
  std::optional<std::size_t> first;
  std::size_t last = 0;
  std::size_t k = 0;
  for (std::size_t p = 0; p < enc.ids.size(); ++p) {
    if (enc.special_mask[p]) continue;
    const CharSpan& o = enc.offsets[k++];
    if (o.start < span.end && span.start < o.end) {
      if (!first) first = p;
      last = p;
    }
  }
  if (!first) {
    throw LookupError("span (" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                      ") intersects no token");
  }
  for (std::size_t p = *first; p <= last; ++p) {
    if (enc.special_mask[p]) {
      throw LookupError("span (" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                        ") straddles a special token");
    }
  }
  return {*first, last + 1};
}

}  // namespace lmscore
