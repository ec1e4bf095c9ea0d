#include <cstring>

#include "doctest.h"
#include "lmscore/errors.hpp"
#include "lmscore/weights_io.hpp"
#include "support/helpers.hpp"

using namespace lmscore;

namespace {

std::uint64_t header_len(const std::string& bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  return v;
}

// Rewrites the JSON header, keeping magic and blob.
std::string with_header(const std::string& bytes, const std::string& header) {
  const std::uint64_t n = header_len(bytes);
  std::string out(bytes.substr(0, 8));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((header.size() >> (8 * i)) & 0xFF));
  return out + header + bytes.substr(16 + n);
}

std::string header_of(const std::string& bytes) { return bytes.substr(16, header_len(bytes)); }

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(crc32({reinterpret_cast<const unsigned char*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("layout: magic, little-endian header length, JSON header, float blob") {
  const auto lm = testing::fixture(Architecture::causal);
  const std::string bytes = serialize_weights(lm.model);
  CHECK(std::memcmp(bytes.data(), "LMSCOREW", 8) == 0);
  const std::uint64_t n = header_len(bytes);
  std::size_t params = 0;
  for (const auto& t : named_tensors(lm.model.weights)) params += t.values.size();
  CHECK(bytes.size() == 16 + n + 4 * params);

  // First blob entry is token_embedding(0, 0) as a little-endian f32.
  float first = 0;
  std::memcpy(&first, bytes.data() + 16 + n, 4);
  CHECK(static_cast<double>(first) == lm.model.weights.token_embedding(0, 0));
}

TEST_CASE("fixture files load back identically") {
  testing::TempDir dir("weights");
  const auto lm = testing::fixture(Architecture::bidirectional);
  save_language_model(dir.path(), lm);
  const auto loaded = load_language_model(dir.path());
  CHECK(loaded.model.config == lm.model.config);
  CHECK(loaded.vocab.tokens() == lm.vocab.tokens());
  const auto a = named_tensors(lm.model.weights);
  const auto b = named_tensors(loaded.model.weights);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin()));
  }
  CHECK(read_file(dir / "config.json") == config_to_json(lm.model.config));

  const auto causal = load_language_model(dir.path(), Architecture::causal);
  CHECK(causal.architecture() == Architecture::causal);
}

TEST_CASE("same seed gives byte-identical files") {
  CHECK(serialize_weights(testing::fixture(Architecture::causal, 42).model) ==
        serialize_weights(testing::fixture(Architecture::causal, 42).model));
  CHECK(serialize_weights(testing::fixture(Architecture::causal, 42).model) !=
        serialize_weights(testing::fixture(Architecture::causal, 43).model));
}

TEST_CASE("corruption is detected") {
  const std::string good = serialize_weights(testing::fixture(Architecture::causal).model);

  SUBCASE("truncated blob") { CHECK_THROWS_AS(deserialize_weights(good.substr(0, good.size() - 4)), ShapeError); }
  SUBCASE("flipped blob byte") {
    std::string bad = good;
    bad[bad.size() - 3] ^= 0x40;
    CHECK_THROWS_AS(deserialize_weights(bad), ChecksumError);
  }
  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_weights(bad), FormatError);
  }
  SUBCASE("header length past end of file") { CHECK_THROWS_AS(deserialize_weights(good.substr(0, 40)), FormatError); }
  SUBCASE("unknown architecture tag") {
    std::string h = header_of(good);
    h.replace(h.find("\"causal\""), 8, "\"seq2seq\"");
    CHECK_THROWS_AS(deserialize_weights(with_header(good, h)), ConfigError);
  }
  SUBCASE("missing tensor") {
    std::string h = header_of(good);
    const auto at = h.find("lm_head.bias");
    h.replace(at, 12, "lm_head.bogo");
    CHECK_THROWS_AS(deserialize_weights(with_header(good, h)), ShapeError);
  }
  SUBCASE("wrong shape") {
    std::string h = header_of(good);
    const auto at = h.find("[32,16]");
    REQUIRE(at != std::string::npos);
    h.replace(at, 7, "[16,32]");
    CHECK_THROWS_AS(deserialize_weights(with_header(good, h)), ShapeError);
  }
  SUBCASE("non-numeric field") {
    std::string h = header_of(good);
    h.replace(h.find("\"crc32\":") + 8, 0, "\"x\",\"pad\":");
    CHECK_THROWS_AS(deserialize_weights(with_header(good, h)), FormatError);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config_from_json(R"({"architecture":"causal","n_layers":2,"n_heads":2,"d_model":15,"d_ff":64,)"
                                   R"("vocab_size":32,"max_seq_len":32})"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"architecture":"causal"})"), FormatError);
  CHECK_THROWS_AS(config_from_json("not json"), FormatError);
  const ModelConfig c = config_from_json(config_to_json(ModelConfig{}));
  CHECK(c == ModelConfig{});
}

TEST_CASE("config file must agree with the embedded config") {
  testing::TempDir dir("mismatch");
  const auto lm = testing::fixture(Architecture::causal);
  save_language_model(dir.path(), lm);
  ModelConfig other = lm.model.config;
  other.max_seq_len = 64;
  write_file_atomic(dir / "config.json", config_to_json(other));
  CHECK_THROWS_AS(load_language_model(dir.path()), FormatError);
}

TEST_CASE("vocabulary size must match the config") {
  testing::TempDir dir("vsize");
  save_language_model(dir.path(), testing::fixture(Architecture::causal));
  write_file_atomic(dir / "vocab.txt", fixture_vocabulary(33).serialize());
  CHECK_THROWS_AS(load_language_model(dir.path()), ConfigError);
}
