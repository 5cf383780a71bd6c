#pragma once

// Checkpoint layout (little-endian):
//   "BFTC" | u32 version | u64 header length | header JSON
//   | float64 parameters, tensor by tensor in for_each_conv order (weight, bias)
//   | u64 FNV-1a checksum of every preceding byte
// The header holds the network config, the init seed, the class list and the
// parameter dtype.

#include <cstdint>
#include <filesystem>
#include <string>

#include "bftcn/binary.hpp"
#include "bftcn/data_io.hpp"
#include "bftcn/errors.hpp"
#include "bftcn/model.hpp"
#include "json.hpp"

namespace bftcn {

inline constexpr char kCheckpointMagic[4] = {'B', 'F', 'T', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    ClassList classes;
};

inline binary::Bytes encode_checkpoint(const Model& model, const ClassList& classes) {
    if (static_cast<int>(classes.size()) != model.config.n_classes) {
        throw ValidationError("checkpoint class list has " + std::to_string(classes.size()) + " entries, model has " +
                              std::to_string(model.config.n_classes) + " classes");
    }
    nlohmann::json header{{"config", model.config}, {"seed", model.seed}, {"classes", classes}, {"dtype", "f64"}};
    const std::string text = header.dump();
    binary::Bytes out;
    out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    binary::put_uint<std::uint32_t>(out, kCheckpointVersion);
    binary::put_uint<std::uint64_t>(out, text.size());
    binary::put_bytes(out, text);
    for (auto t : tensors(model)) {
        for (double v : t) binary::put_f64(out, v);
    }
    binary::put_uint<std::uint64_t>(out, binary::fnv1a(out.data(), out.size()));
    return out;
}

inline Checkpoint decode_checkpoint(const binary::Bytes& bytes, const std::string& source) {
    if (bytes.size() < 4 || !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
        throw BadMagicError(source + ": not a checkpoint (bad magic)");
    }
    binary::Reader r(bytes, source);
    r.get_string(4, "magic");
    const auto version = r.get_uint<std::uint32_t>("header");
    if (version != kCheckpointVersion) {
        throw VersionMismatchError(source + ": checkpoint version " + std::to_string(version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
    }
    const auto len = r.get_uint<std::uint64_t>("header");
    if (len > bytes.size()) {
        throw TruncatedFileError(source + ": header claims " + std::to_string(len) + " bytes, file has " +
                                 std::to_string(bytes.size()));
    }
    Checkpoint ck;
    std::uint64_t seed = 0;
    NetworkConfig cfg;
    try {
        const auto header = nlohmann::json::parse(r.get_string(static_cast<std::size_t>(len), "header"));
        cfg = header.at("config").get<NetworkConfig>();
        seed = header.at("seed").get<std::uint64_t>();
        ck.classes = header.at("classes").get<ClassList>();
        if (header.value("dtype", "f64") != "f64") throw FormatError(source + ": unsupported parameter dtype");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": malformed checkpoint header: " + e.what());
    }
    ck.model = build_model(cfg, seed);
    for (auto t : tensors(ck.model)) {
        r.require(t.size() * 8, "parameters");
        for (double& v : t) v = r.get_f64("parameters");
    }
    const std::size_t body = r.offset();
    const auto stored = r.get_uint<std::uint64_t>("checksum");
    if (r.remaining() != 0) throw FormatError(source + ": trailing bytes after checksum");
    if (stored != binary::fnv1a(bytes.data(), body)) throw ChecksumError(source + ": checksum mismatch");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model, const ClassList& classes) {
    binary::write_file(path, encode_checkpoint(model, classes));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(binary::read_file(path), path.string());
}

}  // namespace bftcn
