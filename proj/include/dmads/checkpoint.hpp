#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmads/model.hpp"
#include "dmads/nn.hpp"

namespace dmads {

// On-disk layout, all integers little-endian:
//   "DMAD" | u32 version | u64 config digest | u32 entry count
//   entry: u32 name length | name bytes | u8 dtype | u8 rank | u32 dims[rank] | raw elements
//   u64 FNV-1a 64 checksum of every preceding byte
// The model configuration travels as a u8 entry named "__config__".
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kConfigEntry = "__config__";

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

struct CheckpointEntry {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;  // little-endian element data
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t digest = 0;
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry* find(const std::string& name) const;
    nn::ModelConfig config() const;  // parsed from the config entry
};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);

// Errors (CheckpointError): "not a checkpoint" for a bad magic, "corrupt" for
// a checksum mismatch or malformed body, "unsupported version" for a newer
// format.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename T>
Checkpoint make_checkpoint(const nn::ParameterStore<T>& params, const nn::ModelConfig& cfg);

// Atomic: writes path.tmp, then renames it over path.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore<T>& params,
                     const nn::ModelConfig& cfg);

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies every tensor into params. The checkpoint's digest must equal
// cfg.digest(), otherwise a CheckpointError reports the incompatibility.
template <typename T>
void load_parameters(const Checkpoint& ckpt, nn::ParameterStore<T>& params, const nn::ModelConfig& cfg);

// Rebuilds the network recorded in the checkpoint and loads its weights.
nn::DmadsNet<float> load_model(const std::filesystem::path& path);

}  // namespace dmads
