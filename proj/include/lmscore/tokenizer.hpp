#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace lmscore {

using TokenId = std::int32_t;

struct SpecialIds {
  TokenId bos = -1;
  TokenId eos = -1;
  TokenId mask = -1;
  TokenId pad = -1;
  TokenId unk = -1;
};

// Half-open byte range [start, end) into a source string.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

// Half-open range of positions into Encoding::ids.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const TokenRange&, const TokenRange&) = default;
};

// Immutable token inventory. Ids are the line order of the vocabulary file.
//
// File format (UTF-8, LF):
//   #special <name> <token>     one per special, before any token line
//   <token>                     one per line
// Every line, header or not, defines the next id. The five names bos, eos,
// mask, pad and unk must all be declared.
class Vocabulary {
 public:
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary parse(std::string_view contents);

  // Builds a vocabulary from an ordered token list; `special` must index
  // into `tokens`.
  Vocabulary(std::vector<std::string> tokens, SpecialIds special,
             std::string continuation_prefix = "##");

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const SpecialIds& special() const { return special_; }
  const std::string& continuation_prefix() const { return continuation_prefix_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_special(TokenId id) const;
  // bos/eos/mask/pad: the positions flagged in Encoding::special_mask.
  bool is_structural(TokenId id) const;

  // Serialized form accepted by parse().
  std::string serialize() const;

 private:
  void validate() const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
  SpecialIds special_;
  std::string continuation_prefix_;
};

struct Encoding {
  std::vector<TokenId> ids;
  // One span per non-special position, in order.
  std::vector<CharSpan> offsets;
  std::vector<bool> special_mask;
  std::string source;

  std::size_t size() const { return ids.size(); }
  // Number of non-special positions.
  std::size_t content_size() const { return offsets.size(); }
  // Position in `ids` of the i-th non-special token.
  std::size_t content_position(std::size_t i) const;
  // Offset of the token at `position`, or nullopt for special positions.
  std::optional<CharSpan> offset_at(std::size_t position) const;
};

// Whitespace pre-tokenization followed by greedy longest-match sub-word
// segmentation. A word equal to the surface of bos/eos/mask/pad maps to that
// special id. Residue that no piece matches becomes one unk token.
Encoding encode(const Vocabulary& vocab, std::string_view text, bool add_special);

// Joins tokens back into text; continuation pieces attach to the previous
// piece, bos/eos/pad are dropped.
std::string decode(const Vocabulary& vocab, const std::vector<TokenId>& ids);

// Collapses runs of whitespace to a single space and trims both ends.
std::string collapse_whitespace(std::string_view text);

// Splits on whitespace, returning the byte span of every word.
std::vector<CharSpan> word_spans(std::string_view text);

using SpanTarget = std::variant<std::string, CharSpan>;

// Maps a word (first exact whitespace-delimited occurrence) or a byte span to
// the contiguous range of non-special token positions that intersect it.
TokenRange resolve_span(const Encoding& enc, const SpanTarget& target);

// Byte span of the first whitespace-delimited occurrence of `word`.
CharSpan find_word(std::string_view source, std::string_view word);

}  // namespace lmscore
