#include "lmscore/weights_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lmscore/errors.hpp"

namespace lmscore {

using json = nlohmann::json;

std::uint32_t crc32(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large inputs in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - pos);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

json config_json(const ModelConfig& c) {
  // Key order is fixed so files are byte-reproducible.
  json j = json::object();
  j["architecture"] = std::string(to_string(c.architecture));
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  return j;
}

std::size_t positive_field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("config is missing '") + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw FormatError(std::string("config field '") + key + "' must be an integer");
  const auto n = v.get<long long>();
  if (n <= 0) throw ConfigError(std::string("config field '") + key + "' must be positive");
  return static_cast<std::size_t>(n);
}

ModelConfig config_from(const json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  ModelConfig c;
  if (!j.contains("architecture") || !j.at("architecture").is_string()) {
    throw FormatError("config is missing string field 'architecture'");
  }
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.n_layers = positive_field(j, "n_layers");
  c.n_heads = positive_field(j, "n_heads");
  c.d_model = positive_field(j, "d_model");
  c.d_ff = positive_field(j, "d_ff");
  c.vocab_size = positive_field(j, "vocab_size");
  c.max_seq_len = positive_field(j, "max_seq_len");
  c.validate();
  return c;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f32(std::string_view in, std::size_t at) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::span<const unsigned char> as_bytes(std::string_view s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

}  // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(2) + "\n"; }

ModelConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from(j);
}

ModelConfig load_config(const std::filesystem::path& path) { return config_from_json(read_file(path)); }

std::string serialize_weights(const Model& model) {
  model.config.validate();
  const auto tensors = named_tensors(model.weights);
  const auto manifest = expected_manifest(model.config);
  if (tensors.size() != manifest.size()) throw ShapeError("weights do not match config");
  std::string blob;
  json entries = json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    if (t.shape != manifest[i].second) throw ShapeError("tensor '" + t.name + "' does not match config shape");
    json e = json::object();
    e["name"] = t.name;
    e["shape"] = t.shape;
    e["offset"] = blob.size();
    entries.push_back(std::move(e));
    for (const double v : t.values) {
      if (!std::isfinite(v)) throw NumericError("tensor '" + t.name + "' has a non-finite entry");
      put_f32(blob, v);
    }
  }
  json header = json::object();
  header["format"] = "lmscore-weights";
  header["version"] = 1;
  header["config"] = config_json(model.config);
  header["tensors"] = std::move(entries);
  header["blob_bytes"] = blob.size();
  header["crc32"] = crc32(as_bytes(blob));
  const std::string header_text = header.dump();

  std::string out(kWeightMagic, sizeof kWeightMagic);
  put_u64(out, header_text.size());
  out += header_text;
  out += blob;
  return out;
}

namespace {

Model deserialize_checked(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kWeightMagic, sizeof kWeightMagic) != 0) {
    throw FormatError("not an lmscore weight file (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw FormatError("weight header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("weight header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != "lmscore-weights") {
    throw FormatError("weight header has wrong format tag");
  }
  if (header.value("version", 0) != 1) throw FormatError("unsupported weight file version");
  if (!header.contains("config") || !header.contains("tensors") || !header.contains("crc32") ||
      !header.contains("blob_bytes")) {
    throw FormatError("weight header is missing config, tensors, blob_bytes or crc32");
  }
  Model model;
  model.config = config_from(header.at("config"));
  model.weights = ModelWeights::zeros(model.config);

  const std::string_view blob = bytes.substr(16 + header_len);
  const auto& entries = header.at("tensors");
  if (!entries.is_array()) throw FormatError("'tensors' must be an array");

  auto targets = named_tensors(model.weights);
  std::size_t required_bytes = 0;
  for (const auto& t : targets) required_bytes += 4 * t.values.size();

  std::vector<bool> filled(targets.size(), false);
  for (const auto& e : entries) {
    const std::string name = e.value("name", "");
    const auto it = std::find_if(targets.begin(), targets.end(), [&](const TensorRef& t) { return t.name == name; });
    if (it == targets.end()) throw ShapeError("unexpected tensor '" + name + "'");
    const std::size_t idx = static_cast<std::size_t>(it - targets.begin());
    if (filled[idx]) throw ShapeError("tensor '" + name + "' listed twice");
    const auto shape = e.value("shape", std::vector<std::size_t>{});
    if (shape != it->shape) {
      throw ShapeError("tensor '" + name + "' has the wrong shape for this config");
    }
    filled[idx] = true;
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!filled[i]) throw ShapeError("missing tensor '" + targets[i].name + "'");
  }
  const auto declared = header.at("blob_bytes").get<std::uint64_t>();
  if (blob.size() != required_bytes || declared != required_bytes) {
    throw ShapeError("weight blob holds " + std::to_string(blob.size()) + " bytes but the manifest needs " +
                     std::to_string(required_bytes));
  }
  if (crc32(as_bytes(blob)) != header.at("crc32").get<std::uint32_t>()) {
    throw ChecksumError("weight blob CRC-32 does not match header");
  }
  for (const auto& e : entries) {
    const std::string name = e.at("name").get<std::string>();
    auto& t = *std::find_if(targets.begin(), targets.end(), [&](const TensorRef& r) { return r.name == name; });
    const auto offset = e.value("offset", std::uint64_t{0});
    const std::size_t n_bytes = 4 * t.values.size();
    if (offset % 4 != 0 || offset > blob.size() || n_bytes > blob.size() - offset) {
      throw ShapeError("tensor '" + name + "' lies outside the blob");
    }
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double v = get_f32(blob, offset + 4 * i);
      if (!std::isfinite(v)) throw NumericError("tensor '" + name + "' has a non-finite entry");
      t.values[i] = v;
    }
  }
  return model;
}

}  // namespace

Model deserialize_weights(std::string_view bytes) {
  try {
    return deserialize_checked(bytes);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed weight header: ") + e.what());
  }
}

Model load_model(const std::filesystem::path& weights_path, const std::filesystem::path& config_path) {
  const ModelConfig config = load_config(config_path);
  Model model = deserialize_weights(read_file(weights_path));
  if (!(model.config == config)) {
    throw FormatError("config file " + config_path.string() + " disagrees with the config embedded in " +
                      weights_path.string());
  }
  return model;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_language_model(const std::filesystem::path& dir, const LanguageModel& lm) {
  if (lm.vocab.size() != lm.model.config.vocab_size) {
    throw ConfigError("vocabulary size " + std::to_string(lm.vocab.size()) + " does not match config vocab_size " +
                      std::to_string(lm.model.config.vocab_size));
  }
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / kVocabFile, lm.vocab.serialize());
  write_file_atomic(dir / kConfigFile, config_to_json(lm.model.config));
  write_file_atomic(dir / kWeightsFile, serialize_weights(lm.model));
}

LanguageModel load_language_model(const std::filesystem::path& dir, std::optional<Architecture> arch_override) {
  Vocabulary vocab = Vocabulary::load(dir / kVocabFile);
  Model model = load_model(dir / kWeightsFile, dir / kConfigFile);
  if (vocab.size() != model.config.vocab_size) {
    throw ConfigError("vocabulary size " + std::to_string(vocab.size()) + " does not match config vocab_size " +
                      std::to_string(model.config.vocab_size));
  }
  if (arch_override) model.config.architecture = *arch_override;
  return LanguageModel{std::move(vocab), std::move(model)};
}

}  // namespace lmscore
