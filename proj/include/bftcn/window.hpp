#pragma once

// Future-window calculus for RR (reduced receptive field) and BF (bounded
// future) multi-stage temporal convolutional networks.
//
// Every dilated temporal convolution pads its input with m zero frames after
// the sequence and 2*delta - m before it, so the output at frame t reads input
// frames t - 2*delta + m, t - delta + m and t + m. The direct future window of
// a convolution is m; a dual-dilated layer sees the larger of its two branches;
// the future window of a network is the sum over all layers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>

#include "bftcn/errors.hpp"
#include "json.hpp"

namespace bftcn {

enum class Variant { RR, BF };

inline std::string to_string(Variant v) { return v == Variant::RR ? "rr" : "bf"; }

inline Variant parse_variant(const std::string& s) {
    if (s == "rr" || s == "RR") return Variant::RR;
    if (s == "bf" || s == "BF") return Variant::BF;
    throw ValidationError("unknown variant '" + s + "' (expected rr or bf)");
}

/// Everything that determines the architecture and hence the future window.
struct NetworkConfig {
    Variant variant = Variant::BF;
    int l_pg = 10;  ///< dual dilated residual layers in the prediction generator
    int l_r = 10;   ///< dilated residual layers per refinement stage
    int n_r = 3;    ///< refinement stages
    int w_max = 1;  ///< per-convolution future bound; ignored for RR
    int n_feature_maps = 128;
    int n_classes = 6;
    int n_features = 1280;  ///< input feature dimension
    double frame_rate_hz = 30.0;
    double dropout = 0.5;

    static constexpr int kMaxLayers = 30;

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw DomainError(std::string("invalid network config: ") + what);
        };
        require(l_pg >= 1 && l_pg <= kMaxLayers, "l_pg must be in [1, 30]");
        require(l_r >= 1 && l_r <= kMaxLayers, "l_r must be in [1, 30]");
        require(n_r >= 0, "n_r must be >= 0");
        require(w_max >= 0, "w_max must be >= 0");
        require(n_feature_maps >= 1, "n_feature_maps must be >= 1");
        require(n_classes >= 1, "n_classes must be >= 1");
        require(n_features >= 1, "n_features must be >= 1");
        require(frame_rate_hz > 0.0 && std::isfinite(frame_rate_hz), "frame_rate_hz must be positive");
        require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
    }

    bool operator==(const NetworkConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
    j = nlohmann::json{{"variant", to_string(c.variant)},
                       {"l_pg", c.l_pg},
                       {"l_r", c.l_r},
                       {"n_r", c.n_r},
                       {"w_max", c.w_max},
                       {"n_feature_maps", c.n_feature_maps},
                       {"n_classes", c.n_classes},
                       {"n_features", c.n_features},
                       {"frame_rate_hz", c.frame_rate_hz},
                       {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
    c.variant = parse_variant(j.at("variant").get<std::string>());
    j.at("l_pg").get_to(c.l_pg);
    j.at("l_r").get_to(c.l_r);
    j.at("n_r").get_to(c.n_r);
    j.at("w_max").get_to(c.w_max);
    j.at("n_feature_maps").get_to(c.n_feature_maps);
    j.at("n_classes").get_to(c.n_classes);
    j.at("n_features").get_to(c.n_features);
    j.at("frame_rate_hz").get_to(c.frame_rate_hz);
    j.at("dropout").get_to(c.dropout);
}

enum class StageKind { PredictionGenerator, Refinement };

struct LayerAddress {
    StageKind stage;
    int layer;  ///< 1-based
};

struct Dilations {
    std::int64_t first;
    std::optional<std::int64_t> second;  ///< only dual-dilated layers have one

    bool operator==(const Dilations&) const = default;
};

inline std::int64_t pow2(int e) { return std::int64_t{1} << e; }

inline int stage_depth(const NetworkConfig& cfg, StageKind stage) {
    return stage == StageKind::PredictionGenerator ? cfg.l_pg : cfg.l_r;
}

inline Dilations dilation_factors(const NetworkConfig& cfg, LayerAddress addr) {
    const int depth = stage_depth(cfg, addr.stage);
    if (addr.layer < 1 || addr.layer > depth) {
        throw AddressError("layer " + std::to_string(addr.layer) + " outside [1, " +
                           std::to_string(depth) + "]");
    }
    if (addr.stage == StageKind::Refinement) return {pow2(addr.layer - 1), std::nullopt};
    return {pow2(addr.layer - 1), pow2(cfg.l_pg - addr.layer)};
}

/// Number of zero frames padded after the input of a convolution with this dilation.
inline std::int64_t future_pad(const NetworkConfig& cfg, std::int64_t dilation) {
    if (cfg.variant == Variant::RR) return dilation;
    return std::min<std::int64_t>(cfg.w_max, dilation);
}

inline std::int64_t direct_future_window(const NetworkConfig& cfg, LayerAddress addr) {
    const Dilations d = dilation_factors(cfg, addr);
    std::int64_t dfw = future_pad(cfg, d.first);
    if (d.second) dfw = std::max(dfw, future_pad(cfg, *d.second));
    return dfw;
}

/// Total future window in frames: the sum of direct future windows over
/// the prediction generator and all refinement stages.
inline std::int64_t future_window(const NetworkConfig& cfg) {
    std::int64_t generator = 0;
    for (int l = 1; l <= cfg.l_pg; ++l) {
        generator += direct_future_window(cfg, {StageKind::PredictionGenerator, l});
    }
    std::int64_t refinement = 0;
    for (int l = 1; l <= cfg.l_r; ++l) {
        refinement += direct_future_window(cfg, {StageKind::Refinement, l});
    }
    return generator + cfg.n_r * refinement;
}

inline double future_window_seconds(const NetworkConfig& cfg) {
    return static_cast<double>(future_window(cfg)) / cfg.frame_rate_hz;
}

/// Delay interval edges in seconds. Intervals are (e_i, e_{i+1}] except the
/// first, [0, 0.001], which holds zero-delay networks.
inline constexpr std::array<double, 13> kDelayEdges = {
    0.0, 0.001, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0,
    std::numeric_limits<double>::infinity()};

inline constexpr int kDelayBucketCount = static_cast<int>(kDelayEdges.size()) - 1;

struct DelayBucket {
    int index = 0;
    double lower = 0.0;
    double upper = 0.0;

    std::string label() const {
        auto fmt = [](double v) {
            if (std::isinf(v)) return std::string("inf");
            char buf[32];
            std::snprintf(buf, sizeof buf, "%g", v);
            return std::string(buf);
        };
        return (index == 0 ? "[" : "(") + fmt(lower) + ", " + fmt(upper) + (std::isinf(upper) ? ")" : "]");
    }

    bool operator==(const DelayBucket&) const = default;
};

inline DelayBucket delay_bucket_at(int index) {
    return {index, kDelayEdges[static_cast<std::size_t>(index)],
            kDelayEdges[static_cast<std::size_t>(index) + 1]};
}

inline DelayBucket bucket_delay(double fw_seconds) {
    if (!(fw_seconds >= 0.0)) throw DomainError("delay must be a non-negative number of seconds");
    for (int i = 0; i < kDelayBucketCount - 1; ++i) {
        if (fw_seconds <= kDelayEdges[static_cast<std::size_t>(i) + 1]) return delay_bucket_at(i);
    }
    return delay_bucket_at(kDelayBucketCount - 1);
}

}  // namespace bftcn
