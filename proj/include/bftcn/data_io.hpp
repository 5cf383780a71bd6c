#pragma once

// Feature files, label files and dataset manifests.
//
// Feature file layout (little-endian):
//   "BFTF" | u32 version | u64 T | u64 N_f | T*N_f float32, frame-major
// Label files are text, either one class token per line (one line per frame)
// or "start end label" segment lines with half-open, contiguous ranges.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "bftcn/binary.hpp"
#include "bftcn/errors.hpp"
#include "bftcn/matrix.hpp"
#include "bftcn/metrics.hpp"
#include "json.hpp"

namespace bftcn {

inline constexpr char kFeatureMagic[4] = {'B', 'F', 'T', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

/// Ordered class tokens; a label's dense id is its position.
using ClassList = std::vector<std::string>;

/// Six gesture classes, G0 .. G5.
inline ClassList default_classes() { return {"G0", "G1", "G2", "G3", "G4", "G5"}; }

/// Serialise a channels x frames matrix as a frame-major float32 feature file.
inline binary::Bytes encode_features(const Matrix& features) {
    if (features.frames() == 0 || features.channels() == 0) throw DomainError("feature file needs T >= 1 and N_f >= 1");
    binary::Bytes out;
    out.reserve(24 + features.size() * 4);
    out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
    binary::put_uint<std::uint32_t>(out, kFeatureVersion);
    binary::put_uint<std::uint64_t>(out, features.frames());
    binary::put_uint<std::uint64_t>(out, features.channels());
    for (std::size_t t = 0; t < features.frames(); ++t) {
        for (std::size_t c = 0; c < features.channels(); ++c) binary::put_f32(out, static_cast<float>(features(c, t)));
    }
    return out;
}

inline Matrix decode_features(const binary::Bytes& bytes, const std::string& source) {
    binary::Reader r(bytes, source);
    if (bytes.size() < 4 || !std::equal(std::begin(kFeatureMagic), std::end(kFeatureMagic), bytes.begin())) {
        throw BadMagicError(source + ": not a feature file (bad magic)");
    }
    r.get_string(4, "magic");
    const auto version = r.get_uint<std::uint32_t>("header");
    if (version != kFeatureVersion) {
        throw VersionMismatchError(source + ": feature format version " + std::to_string(version) + ", expected " +
                                   std::to_string(kFeatureVersion));
    }
    const auto frames = r.get_uint<std::uint64_t>("header");
    const auto dims = r.get_uint<std::uint64_t>("header");
    if (frames == 0 || dims == 0) throw FormatError(source + ": feature file declares an empty matrix");
    if (dims > (1ULL << 32) || frames > (1ULL << 40) / dims) throw FormatError(source + ": implausible dimensions");
    const std::uint64_t payload = frames * dims * 4;
    if (r.remaining() < payload) {
        throw TruncatedFileError(source + ": truncated payload: expected " + std::to_string(r.offset() + payload) +
                                 " bytes, file has " + std::to_string(bytes.size()));
    }
    if (r.remaining() > payload) {
        throw FormatError(source + ": " + std::to_string(r.remaining() - payload) + " trailing bytes after payload");
    }
    Matrix m(dims, frames);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < dims; ++c) m(c, t) = r.get_f32("payload");
    }
    return m;
}

inline void write_features(const std::filesystem::path& path, const Matrix& features) {
    binary::write_file(path, encode_features(features));
}

inline Matrix read_features(const std::filesystem::path& path) {
    return decode_features(binary::read_file(path), path.string());
}

enum class LabelFormat { Auto, Frames, Segments };

inline LabelFormat parse_label_format(const std::string& s) {
    if (s == "auto") return LabelFormat::Auto;
    if (s == "frames") return LabelFormat::Frames;
    if (s == "segments") return LabelFormat::Segments;
    throw ValidationError("unknown label format '" + s + "' (expected frames, segments or auto)");
}

inline int class_id(const ClassList& classes, const std::string& token, const std::string& where) {
    const auto it = std::find(classes.begin(), classes.end(), token);
    if (it == classes.end()) throw ValidationError(where + ": unknown label '" + token + "'");
    return static_cast<int>(it - classes.begin());
}

inline std::vector<int> parse_labels(const std::string& text, const ClassList& classes, LabelFormat format,
                                     const std::string& source) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::istringstream in(text);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string tok; ls >> tok;) tokens.push_back(tok);
        if (tokens.empty()) continue;
        rows.push_back(std::move(tokens));
        line_numbers.push_back(n);
    }
    if (rows.empty()) throw ValidationError(source + ": no labels");
    if (format == LabelFormat::Auto) format = rows.front().size() == 3 ? LabelFormat::Segments : LabelFormat::Frames;

    auto where = [&](std::size_t i) { return source + ":" + std::to_string(line_numbers[i]); };
    if (format == LabelFormat::Frames) {
        std::vector<int> labels;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != 1) throw ValidationError(where(i) + ": expected one label per line");
            labels.push_back(class_id(classes, rows[i][0], where(i)));
        }
        return labels;
    }
    std::vector<Segment> segs;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != 3) throw ValidationError(where(i) + ": expected 'start end label'");
        Segment s;
        try {
            std::size_t used0 = 0, used1 = 0;
            s.start = std::stoll(rows[i][0], &used0);
            s.end = std::stoll(rows[i][1], &used1);
            if (used0 != rows[i][0].size() || used1 != rows[i][1].size()) throw std::invalid_argument("junk");
        } catch (const std::logic_error&) {
            throw ValidationError(where(i) + ": segment bounds are not integers");
        }
        s.label = class_id(classes, rows[i][2], where(i));
        segs.push_back(s);
    }
    try {
        return segments_to_frames(segs);
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

inline std::string format_labels(const std::vector<int>& labels, const ClassList& classes, LabelFormat format) {
    auto token = [&](int id) {
        if (id < 0 || static_cast<std::size_t>(id) >= classes.size()) throw ValidationError("label id out of range");
        return classes[static_cast<std::size_t>(id)];
    };
    std::string out;
    if (format == LabelFormat::Segments) {
        for (const Segment& s : frames_to_segments(labels)) {
            out += std::to_string(s.start) + " " + std::to_string(s.end) + " " + token(s.label) + "\n";
        }
    } else {
        for (int id : labels) out += token(id) + "\n";
    }
    return out;
}

inline std::vector<int> read_labels(const std::filesystem::path& path, const ClassList& classes,
                                    LabelFormat format = LabelFormat::Auto) {
    return parse_labels(binary::read_text(path), classes, format, path.string());
}

inline void write_labels(const std::filesystem::path& path, const std::vector<int>& labels, const ClassList& classes,
                         LabelFormat format = LabelFormat::Frames) {
    binary::write_text(path, format_labels(labels, classes, format == LabelFormat::Auto ? LabelFormat::Frames : format));
}

struct ManifestEntry {
    std::filesystem::path features;
    std::filesystem::path labels;
    double fps = 30.0;
};

/// {classes: [...], videos: [{features, labels, fps}]}; relative paths are
/// resolved against the manifest's directory.
struct Manifest {
    ClassList classes;
    std::vector<ManifestEntry> videos;
};

inline Manifest load_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(binary::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": invalid manifest JSON: " + e.what());
    }
    Manifest m;
    const auto base = path.parent_path();
    try {
        m.classes = j.at("classes").get<ClassList>();
        for (const auto& v : j.at("videos")) {
            ManifestEntry e;
            e.features = base / v.at("features").get<std::string>();
            e.labels = base / v.at("labels").get<std::string>();
            e.fps = v.value("fps", 30.0);
            m.videos.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": malformed manifest: " + e.what());
    }
    if (m.classes.empty()) throw ValidationError(path.string() + ": manifest declares no classes");
    return m;
}

/// Paths are written as given (callers pass them relative to the manifest directory).
inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
    nlohmann::json j;
    j["classes"] = m.classes;
    j["videos"] = nlohmann::json::array();
    for (const auto& v : m.videos) {
        j["videos"].push_back({{"features", v.features.generic_string()}, {"labels", v.labels.generic_string()}, {"fps", v.fps}});
    }
    binary::write_text(path, j.dump(2) + "\n");
}

struct Video {
    std::string name;
    Matrix features;  ///< channels x frames
    std::vector<int> labels;
    double fps = 30.0;
};

inline std::vector<Video> load_videos(const Manifest& m) {
    std::vector<Video> videos;
    for (const auto& e : m.videos) {
        for (const auto& p : {e.features, e.labels}) {
            if (!std::filesystem::exists(p)) throw IoError("missing file '" + p.string() + "'");
        }
        Video v;
        v.name = e.features.stem().string();
        v.features = read_features(e.features);
        v.labels = read_labels(e.labels, m.classes);
        v.fps = e.fps;
        if (v.labels.size() != v.features.frames()) {
            throw ValidationError(e.labels.string() + ": " + std::to_string(v.labels.size()) + " labels for " +
                                  std::to_string(v.features.frames()) + " feature frames");
        }
        videos.push_back(std::move(v));
    }
    return videos;
}

}  // namespace bftcn
