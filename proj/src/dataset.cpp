#include "uqnav/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "uqnav/rng.hpp"

namespace uqnav {
namespace {

constexpr char kMagic[4] = {'U', 'Q', 'D', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t pos) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[pos + i]) << (8 * i);
    return v;
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
    for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

void Dataset::append(std::span<const double> obs, std::span<const double> pose, std::span<const double> cmd) {
    if (obs.size() != obs_dim || pose.size() != pose_dim || cmd.size() != cmd_dim) {
        throw DatasetError(DatasetError::Kind::layout_mismatch, "record does not match dataset dimensions");
    }
    for (double v : obs) observations.push_back(static_cast<float>(v));
    for (double v : pose) poses.push_back(static_cast<float>(v));
    for (double v : cmd) commands.push_back(static_cast<float>(v));
}

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
    const std::size_t n = data.size();
    std::vector<std::uint8_t> out;
    out.reserve(kDatasetHeaderBytes + n * (data.obs_dim + data.pose_dim + data.cmd_dim) * 4);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kDatasetVersion);
    put_le<std::uint64_t>(out, n);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.obs_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.pose_dim));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.cmd_dim));
    for (std::size_t i = 0; i < n; ++i) {
        put_floats(out, data.observation(i));
        put_floats(out, data.pose(i));
        put_floats(out, data.command(i));
    }
    return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kDatasetHeaderBytes) {
        throw DatasetError(DatasetError::Kind::truncated, "dataset shorter than its header");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw DatasetError(DatasetError::Kind::magic_mismatch, "dataset magic is not UQD1");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kDatasetVersion) {
        throw DatasetError(DatasetError::Kind::version_mismatch, "unsupported dataset version " + std::to_string(version));
    }
    const auto count = get_le<std::uint64_t>(bytes, 8);
    Dataset d;
    d.obs_dim = get_le<std::uint32_t>(bytes, 16);
    d.pose_dim = get_le<std::uint32_t>(bytes, 20);
    d.cmd_dim = get_le<std::uint32_t>(bytes, 24);
    if (d.obs_dim != 256 || d.pose_dim != 4 || d.cmd_dim != 4) {
        throw DatasetError(DatasetError::Kind::layout_mismatch, "dataset dimensions are not 256/4/4");
    }
    const std::size_t record_floats = d.obs_dim + d.pose_dim + d.cmd_dim;
    const std::uint64_t payload = bytes.size() - kDatasetHeaderBytes;
    if (count > payload / (record_floats * 4) || payload < count * record_floats * 4) {
        throw DatasetError(DatasetError::Kind::truncated,
                           "dataset payload holds fewer than " + std::to_string(count) + " records");
    }
    if (payload != count * record_floats * 4) {
        throw DatasetError(DatasetError::Kind::trailing_bytes, "dataset payload longer than record_count implies");
    }
    d.observations.resize(count * d.obs_dim);
    d.poses.resize(count * d.pose_dim);
    d.commands.resize(count * d.cmd_dim);
    std::size_t pos = kDatasetHeaderBytes;
    auto read_into = [&](float* dst, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k, pos += 4) dst[k] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    };
    for (std::size_t i = 0; i < count; ++i) {
        read_into(d.observations.data() + i * d.obs_dim, d.obs_dim);
        read_into(d.poses.data() + i * d.pose_dim, d.pose_dim);
        read_into(d.commands.data() + i * d.cmd_dim, d.cmd_dim);
    }
    return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    const auto bytes = encode_dataset(data);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DatasetError(DatasetError::Kind::io, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DatasetError(DatasetError::Kind::io, "short write to " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DatasetError(DatasetError::Kind::io, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return decode_dataset(bytes);
}

bool is_held_out(std::size_t record_index) noexcept { return mix64(record_index ^ 0xA5A5A5A5ULL) % 10 == 0; }

Split split_dataset(std::size_t n) {
    Split s;
    for (std::size_t i = 0; i < n; ++i) (is_held_out(i) ? s.held_out : s.train).push_back(i);
    return s;
}

}  // namespace uqnav
