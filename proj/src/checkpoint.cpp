#include "uqnav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "uqnav/errors.hpp"

namespace uqnav::nn {
namespace {

constexpr char kMagic[4] = {'U', 'Q', 'P', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(CheckpointError::Kind::truncated, std::string("checkpoint truncated in ") + what);
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MlpParams& params) {
    params.validate();
    std::vector<std::uint8_t> out;
    out.reserve(12 + 9 * params.layers.size() + 4 * params.parameter_count());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& layer : params.layers) {
        put_u32(out, static_cast<std::uint32_t>(layer.in_dim()));
        put_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
        out.push_back(static_cast<std::uint8_t>(layer.activation));
    }
    for (const auto& layer : params.layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) put_f32(out, layer.weights(r, c));
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f32(out, layer.bias(i));
    }
    return out;
}

MlpParams decode_checkpoint(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    Reader in(bytes, offset);
    in.need(4, "magic");
    if (std::memcmp(bytes.data() + offset, kMagic, 4) != 0) {
        throw CheckpointError(CheckpointError::Kind::magic_mismatch, "checkpoint magic is not UQP1");
    }
    Reader body(bytes, offset + 4);
    const std::uint32_t version = body.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t layer_count = body.u32("layer count");
    if (layer_count == 0) throw CheckpointError(CheckpointError::Kind::dimension_mismatch, "checkpoint has no layers");
    if (static_cast<std::uint64_t>(layer_count) * 9 > body.remaining()) {
        throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated in layer headers");
    }

    MlpParams p;
    std::uint64_t payload_values = 0;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::uint32_t in_dim = body.u32("layer header");
        const std::uint32_t out_dim = body.u32("layer header");
        const std::uint8_t act = body.u8("layer header");
        if (in_dim == 0 || out_dim == 0) {
            throw CheckpointError(CheckpointError::Kind::dimension_mismatch, "zero layer width");
        }
        if (act > static_cast<std::uint8_t>(Activation::tanh)) {
            throw CheckpointError(CheckpointError::Kind::dimension_mismatch, "unknown activation code");
        }
        if (l > 0 && in_dim != p.layers.back().out_dim()) {
            throw CheckpointError(CheckpointError::Kind::dimension_mismatch,
                                  "layer " + std::to_string(l) + " input width disagrees with previous output");
        }
        p.layers.push_back({Eigen::MatrixXd(out_dim, in_dim), Eigen::VectorXd(out_dim), static_cast<Activation>(act)});
        payload_values += static_cast<std::uint64_t>(out_dim) * (static_cast<std::uint64_t>(in_dim) + 1);
    }
    if (payload_values * 4 > body.remaining()) {
        throw CheckpointError(CheckpointError::Kind::truncated,
                              "checkpoint payload shorter than header implies (" + std::to_string(body.remaining()) +
                                  " < " + std::to_string(payload_values * 4) + " bytes)");
    }
    for (auto& layer : p.layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = body.f32("payload");
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = body.f32("payload");
    }
    offset = body.pos();
    return p;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError(CheckpointError::Kind::io, "short write to " + path.string());
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(params));
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t offset = 0;
    MlpParams p = decode_checkpoint(bytes, offset);
    if (offset != bytes.size()) {
        throw CheckpointError(CheckpointError::Kind::trailing_bytes, "unexpected bytes after checkpoint in " + path.string());
    }
    return p;
}

void save_checkpoints(std::span<const MlpParams> networks, const std::filesystem::path& path) {
    std::vector<std::uint8_t> all;
    for (const auto& net : networks) {
        const auto block = encode_checkpoint(net);
        all.insert(all.end(), block.begin(), block.end());
    }
    write_file_bytes(path, all);
}

std::vector<MlpParams> load_checkpoints(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::vector<MlpParams> nets;
    std::size_t offset = 0;
    while (offset < bytes.size()) nets.push_back(decode_checkpoint(bytes, offset));
    if (nets.empty()) throw CheckpointError(CheckpointError::Kind::truncated, "empty checkpoint file " + path.string());
    return nets;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace uqnav::nn
