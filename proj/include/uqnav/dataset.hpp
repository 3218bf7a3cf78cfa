#pragma once
// "UQD1" dataset files: rendered observation, ground-truth gate pose, expert command.
//
// Layout, all little-endian:
//   "UQD1" | u32 version=1 | u64 record_count | u32 obs_dim=256 | u32 pose_dim=4 | u32 cmd_dim=4
//   | records: obs_dim + pose_dim + cmd_dim f32 values each

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uqnav {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 4 + 4 + 8 + 4 + 4 + 4;

class DatasetError : public std::runtime_error {
public:
    enum class Kind { io, magic_mismatch, version_mismatch, layout_mismatch, truncated, trailing_bytes };

    DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Columnar in-memory dataset; values are kept at storage precision.
struct Dataset {
    std::size_t obs_dim = 256;
    std::size_t pose_dim = 4;
    std::size_t cmd_dim = 4;
    std::vector<float> observations;  // size() * obs_dim
    std::vector<float> poses;         // size() * pose_dim
    std::vector<float> commands;      // size() * cmd_dim

    std::size_t size() const noexcept { return obs_dim == 0 ? 0 : observations.size() / obs_dim; }

    std::span<const float> observation(std::size_t i) const {
        return {observations.data() + i * obs_dim, obs_dim};
    }
    std::span<const float> pose(std::size_t i) const { return {poses.data() + i * pose_dim, pose_dim}; }
    std::span<const float> command(std::size_t i) const { return {commands.data() + i * cmd_dim, cmd_dim}; }

    void append(std::span<const double> obs, std::span<const double> pose, std::span<const double> cmd);

    bool operator==(const Dataset&) const = default;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Deterministic 90/10 train/held-out split keyed on the record index.
bool is_held_out(std::size_t record_index) noexcept;

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held_out;
};

Split split_dataset(std::size_t n);

}  // namespace uqnav
