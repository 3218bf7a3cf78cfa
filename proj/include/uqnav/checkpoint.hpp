#pragma once
// "UQP1" checkpoint files.
//
// Layout, all integers little-endian:
//   "UQP1" | u32 version=1 | u32 layer_count
//   | per layer: u32 in_dim, u32 out_dim, u8 activation
//   | payload, per layer: weights (row-major), then biases, as f32
//
// Several networks may be stored in one file as concatenated blocks.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqnav/tensor_nn.hpp"

namespace uqnav::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { io, magic_mismatch, version_mismatch, truncated, dimension_mismatch, trailing_bytes };

    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

std::vector<std::uint8_t> encode_checkpoint(const MlpParams& params);

/// Decodes one block starting at `offset`; advances `offset` past it.
MlpParams decode_checkpoint(std::span<const std::uint8_t> bytes, std::size_t& offset);

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

void save_checkpoints(std::span<const MlpParams> networks, const std::filesystem::path& path);
std::vector<MlpParams> load_checkpoints(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// FNV-1a of a byte range; used for artifact checksums.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace uqnav::nn
