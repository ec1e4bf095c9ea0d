#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "lmscore/model.hpp"

namespace lmscore {

// Weight file layout:
//
//   offset 0   8 bytes   magic "LMSCOREW"
//   offset 8   8 bytes   header length H, unsigned little-endian
//   offset 16  H bytes   UTF-8 JSON header
//   offset 16+H          blob: little-endian IEEE-754 float32 values
//
// Header:
//   {"format":"lmscore-weights","version":1,
//    "config":{...same keys as config.json...},
//    "tensors":[{"name":..., "shape":[...], "offset":<byte offset into blob>}, ...],
//    "blob_bytes":N, "crc32":<CRC-32 of the blob>}
//
// The writer emits tensors in canonical order with contiguous offsets.
inline constexpr char kWeightMagic[8] = {'L', 'M', 'S', 'C', 'O', 'R', 'E', 'W'};

inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kWeightsFile = "model.bin";

std::uint32_t crc32(std::span<const unsigned char> bytes);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(std::string_view text);
ModelConfig load_config(const std::filesystem::path& path);

// Serialized weight file bytes. Values are rounded to float32.
std::string serialize_weights(const Model& model);
Model deserialize_weights(std::string_view bytes);

// Loads weights and checks that the embedded config equals the config file.
Model load_model(const std::filesystem::path& weights_path, const std::filesystem::path& config_path);

// Writes vocab.txt, config.json and model.bin into `dir` (created if needed).
void save_language_model(const std::filesystem::path& dir, const LanguageModel& lm);

// Loads the three model files from `dir`. `arch_override` replaces the stored
// architecture tag, which lets the same weights run under either attention mask.
LanguageModel load_language_model(const std::filesystem::path& dir,
                                  std::optional<Architecture> arch_override = std::nullopt);

// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace lmscore
