#pragma once
// Self-describing binary checkpoints. A checkpoint carries the model config,
// partition case, mechanism kind, a frozen flag, and every named parameter
// tensor in registration order. Doubles are written raw (little-endian), so
// save → load → save is byte-identical and loaded models reproduce forward
// outputs bitwise.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scout/model.hpp"

namespace scout {

inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'O', 'U',
                                             'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_backbone(const std::filesystem::path& path, const Transformer& model,
                   bool frozen = false);
void save_scout_model(const std::filesystem::path& path, const ScoutModel& model);

// Loading validates the magic, version, and that every stored tensor matches
// the reconstructed model's parameter names and shapes exactly.
Transformer load_backbone(const std::filesystem::path& path);
ScoutModel load_scout_model(const std::filesystem::path& path);

// Checkpoint kind stored in the header.
bool checkpoint_is_backbone(const std::filesystem::path& path);
bool checkpoint_frozen_flag(const std::filesystem::path& path);

// FNV-1a over the file bytes; used for manifests and idempotent reruns.
std::uint64_t file_checksum(const std::filesystem::path& path);
std::string checksum_hex(std::uint64_t checksum);

// FNV-1a over all parameter values in registration order (cache keys).
std::uint64_t params_checksum(const ParameterStore& params);

}  // namespace scout
