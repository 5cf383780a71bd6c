#pragma once

// Seeded synthetic gesture sequences: a Markov chain over classes with a
// minimum dwell time, and features drawn around per-class mean vectors.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "bftcn/data_io.hpp"
#include "bftcn/errors.hpp"
#include "bftcn/matrix.hpp"
#include "bftcn/rng.hpp"

namespace bftcn {

struct SynthSpec {
    int n_classes = 6;
    int t_min = 500;
    int t_max = 700;
    /// Row-stochastic n_classes x n_classes matrix; empty selects the default
    /// (stay with probability `stay_probability`, otherwise switch uniformly).
    std::vector<std::vector<double>> transition;
    double stay_probability = 0.98;
    int min_dwell = 10;
    /// n_classes x feature_dim; empty draws standard-normal means from means_seed.
    std::vector<std::vector<double>> class_means;
    std::uint64_t means_seed = 0;
    double sigma = 1.0;
    int feature_dim = 16;
    std::uint64_t seed = 0;
};

struct SyntheticVideo {
    Matrix features;  ///< feature_dim x T
    std::vector<int> labels;
};

inline std::vector<std::vector<double>> make_class_means(int n_classes, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> means(static_cast<std::size_t>(n_classes), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& row : means) {
        for (double& v : row) v = rng.normal();
    }
    return means;
}

inline std::vector<std::vector<double>> resolved_transition(const SynthSpec& spec) {
    const auto n = static_cast<std::size_t>(spec.n_classes);
    if (!spec.transition.empty()) return spec.transition;
    std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p[i][j] = n == 1 ? 1.0 : (i == j ? spec.stay_probability : (1.0 - spec.stay_probability) / static_cast<double>(n - 1));
        }
    }
    return p;
}

inline void validate(const SynthSpec& spec) {
    if (spec.n_classes < 1) throw DomainError("synthetic spec: n_classes must be >= 1");
    if (spec.t_min < 1 || spec.t_max < spec.t_min) throw DomainError("synthetic spec: need 1 <= t_min <= t_max");
    if (spec.min_dwell < 1) throw DomainError("synthetic spec: min_dwell must be >= 1");
    if (!(spec.sigma >= 0.0)) throw DomainError("synthetic spec: sigma must be >= 0");
    if (spec.feature_dim < 1) throw DomainError("synthetic spec: feature_dim must be >= 1");
    const auto n = static_cast<std::size_t>(spec.n_classes);
    const auto p = resolved_transition(spec);
    if (p.size() != n) throw DomainError("degenerate transition matrix: wrong number of rows");
    for (std::size_t i = 0; i < n; ++i) {
        if (p[i].size() != n) throw DomainError("degenerate transition matrix: row " + std::to_string(i) + " has wrong length");
        double sum = 0.0;
        for (double v : p[i]) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("degenerate transition matrix: invalid entry in row " + std::to_string(i));
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw DomainError("degenerate transition matrix: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
    if (!spec.class_means.empty()) {
        if (spec.class_means.size() != n) throw DomainError("synthetic spec: one mean vector per class required");
        for (const auto& m : spec.class_means) {
            if (m.size() != static_cast<std::size_t>(spec.feature_dim)) throw DomainError("synthetic spec: mean vector has wrong dimension");
        }
    }
}

inline SyntheticVideo generate_synthetic(const SynthSpec& spec) {
    validate(spec);
    const auto means = spec.class_means.empty() ? make_class_means(spec.n_classes, spec.feature_dim, spec.means_seed)
                                                : spec.class_means;
    const auto p = resolved_transition(spec);
    Rng rng(spec.seed);
    const auto frames = static_cast<std::size_t>(spec.t_min) +
                        static_cast<std::size_t>(rng.index(static_cast<std::uint64_t>(spec.t_max - spec.t_min + 1)));

    SyntheticVideo v;
    v.labels.resize(frames);
    auto current = static_cast<int>(rng.index(static_cast<std::uint64_t>(spec.n_classes)));
    int dwell = 0;
    for (std::size_t t = 0; t < frames; ++t) {
        if (dwell >= spec.min_dwell) {
            const auto& row = p[static_cast<std::size_t>(current)];
            const double u = rng.uniform();
            double acc = 0.0;
            int next = current;
            for (std::size_t j = 0; j < row.size(); ++j) {
                acc += row[j];
                if (u < acc) {
                    next = static_cast<int>(j);
                    break;
                }
            }
            if (next != current) {
                current = next;
                dwell = 0;
            }
        }
        v.labels[t] = current;
        ++dwell;
    }

    v.features = Matrix(static_cast<std::size_t>(spec.feature_dim), frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto& mu = means[static_cast<std::size_t>(v.labels[t])];
        for (std::size_t c = 0; c < mu.size(); ++c) v.features(c, t) = mu[c] + spec.sigma * rng.normal();
    }
    return v;
}

/// Frame accuracy (percent) of assigning each frame to the closest class mean.
inline double nearest_mean_accuracy(const Matrix& features, const std::vector<int>& labels,
                                    const std::vector<std::vector<double>>& means) {
    std::size_t hit = 0;
    for (std::size_t t = 0; t < features.frames(); ++t) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t k = 0; k < means.size(); ++k) {
            double d = 0.0;
            for (std::size_t c = 0; c < features.channels(); ++c) {
                const double diff = features(c, t) - means[k][c];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                arg = static_cast<int>(k);
            }
        }
        hit += arg == labels[t] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(hit) / static_cast<double>(features.frames());
}

/// Write `count` synthetic videos (seeds base.seed, base.seed+1, ...) plus a
/// manifest.json into `dir`. Returns the manifest path.
inline std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const SynthSpec& base, int count,
                                                     double fps = 30.0) {
    std::filesystem::create_directories(dir);
    Manifest m;
    for (int k = 0; k < base.n_classes; ++k) m.classes.push_back("G" + std::to_string(k));
    for (int i = 0; i < count; ++i) {
        SynthSpec s = base;
        s.seed = base.seed + static_cast<std::uint64_t>(i);
        const SyntheticVideo v = generate_synthetic(s);
        const std::string stem = "video_" + std::to_string(i);
        write_features(dir / (stem + ".bftf"), v.features);
        write_labels(dir / (stem + ".txt"), v.labels, m.classes, LabelFormat::Segments);
        m.videos.push_back({stem + ".bftf", stem + ".txt", fps});
    }
    const auto manifest = dir / "manifest.json";
    save_manifest(manifest, m);
    return manifest;
}

}  // namespace bftcn
