#pragma once

// Frame-wise and segmental evaluation metrics. All scores are percentages.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bftcn/errors.hpp"
#include "json.hpp"

namespace bftcn {

/// A maximal run of one label over frames [start, end).
struct Segment {
    int label = 0;
    std::int64_t start = 0;
    std::int64_t end = 0;

    std::int64_t length() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

inline std::vector<Segment> frames_to_segments(std::span<const int> labels) {
    if (labels.empty()) throw DomainError("cannot segment an empty label sequence");
    std::vector<Segment> segs;
    std::int64_t start = 0;
    for (std::size_t t = 1; t <= labels.size(); ++t) {
        if (t == labels.size() || labels[t] != labels[t - 1]) {
            segs.push_back({labels[t - 1], start, static_cast<std::int64_t>(t)});
            start = static_cast<std::int64_t>(t);
        }
    }
    return segs;
}

/// Checks that segments are non-empty, contiguous from frame 0, and that
/// neighbours carry different labels.
inline void validate_segments(std::span<const Segment> segs) {
    std::int64_t expect = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const Segment& s = segs[i];
        if (s.start >= s.end) throw ValidationError("segment " + std::to_string(i) + " is empty or reversed");
        if (s.start != expect) {
            throw ValidationError("segment " + std::to_string(i) + (s.start > expect ? " leaves a gap" : " overlaps") +
                                  " at frame " + std::to_string(std::min(s.start, expect)));
        }
        if (i > 0 && segs[i - 1].label == s.label) {
            throw ValidationError("segments " + std::to_string(i - 1) + " and " + std::to_string(i) + " share a label");
        }
        expect = s.end;
    }
}

inline std::vector<int> segments_to_frames(std::span<const Segment> segs) {
    std::vector<int> labels;
    std::int64_t expect = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const Segment& s = segs[i];
        if (s.start >= s.end) throw ValidationError("segment " + std::to_string(i) + " is empty or reversed");
        if (s.start != expect) {
            throw ValidationError("segment " + std::to_string(i) + (s.start > expect ? " leaves a gap" : " overlaps") +
                                  " at frame " + std::to_string(std::min(s.start, expect)));
        }
        labels.insert(labels.end(), static_cast<std::size_t>(s.length()), s.label);
        expect = s.end;
    }
    return labels;
}

namespace detail {
inline void require_same_length(std::span<const int> pred, std::span<const int> gt) {
    if (pred.size() != gt.size()) {
        throw ShapeError("prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                         std::to_string(gt.size()));
    }
    if (gt.empty()) throw DomainError("metrics over an empty sequence");
}
}  // namespace detail

inline double accuracy(std::span<const int> pred, std::span<const int> gt) {
    detail::require_same_length(pred, gt);
    std::size_t hit = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) hit += pred[t] == gt[t] ? 1 : 0;
    return 100.0 * static_cast<double>(hit) / static_cast<double>(gt.size());
}

/// Mean per-class frame F1 over all n_classes classes. A class absent from
/// both sequences scores 0.
inline double f1_macro(std::span<const int> pred, std::span<const int> gt, int n_classes) {
    detail::require_same_length(pred, gt);
    if (n_classes < 1) throw DomainError("n_classes must be >= 1");
    std::vector<double> tp(static_cast<std::size_t>(n_classes)), fp(tp.size()), fn(tp.size());
    auto idx = [&](int c) {
        if (c < 0 || c >= n_classes) throw DomainError("label " + std::to_string(c) + " out of range");
        return static_cast<std::size_t>(c);
    };
    for (std::size_t t = 0; t < gt.size(); ++t) {
        if (pred[t] == gt[t]) {
            tp[idx(gt[t])] += 1;
        } else {
            fp[idx(pred[t])] += 1;
            fn[idx(gt[t])] += 1;
        }
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < tp.size(); ++c) {
        const double denom = 2 * tp[c] + fp[c] + fn[c];
        sum += denom > 0 ? 2 * tp[c] / denom : 0.0;
    }
    return 100.0 * sum / n_classes;
}

/// Levenshtein distance between two label strings (unit insert/delete/substitute).
inline std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

inline std::vector<int> segment_labels(std::span<const Segment> segs) {
    std::vector<int> out;
    out.reserve(segs.size());
    for (const auto& s : segs) out.push_back(s.label);
    return out;
}

inline double edit_score(std::span<const Segment> pred, std::span<const Segment> gt) {
    if (pred.empty() && gt.empty()) return 100.0;
    const auto a = segment_labels(pred);
    const auto b = segment_labels(gt);
    const double norm = static_cast<double>(std::max(a.size(), b.size()));
    return 100.0 * (1.0 - static_cast<double>(levenshtein(a, b)) / norm);
}

inline double segment_iou(const Segment& a, const Segment& b) {
    const std::int64_t inter = std::max<std::int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const std::int64_t uni = std::max(a.end, b.end) - std::min(a.start, b.start);
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct SegmentCounts {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
};

/// Greedy matching: predicted segments in temporal order each claim the
/// unmatched same-label ground-truth segment of highest IoU, if that IoU
/// exceeds k/100 (strictly).
inline SegmentCounts match_segments(std::span<const Segment> pred, std::span<const Segment> gt, double k) {
    const double threshold = k / 100.0;
    std::vector<bool> used(gt.size(), false);
    SegmentCounts counts;
    for (const Segment& p : pred) {
        double best = -1.0;
        std::optional<std::size_t> best_idx;
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (used[j] || gt[j].label != p.label) continue;
            const double iou = segment_iou(p, gt[j]);
            if (iou > best) {
                best = iou;
                best_idx = j;
            }
        }
        if (best_idx && best > threshold) {
            used[*best_idx] = true;
            ++counts.true_positives;
        } else {
            ++counts.false_positives;
        }
    }
    counts.false_negatives = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
    return counts;
}

inline double f1_at_k(std::span<const Segment> pred, std::span<const Segment> gt, double k) {
    for (const auto& s : pred) if (s.start >= s.end) throw ValidationError("malformed predicted segment");
    for (const auto& s : gt) if (s.start >= s.end) throw ValidationError("malformed ground-truth segment");
    if (pred.empty() && gt.empty()) return 100.0;
    const SegmentCounts c = match_segments(pred, gt, k);
    const double tp = static_cast<double>(c.true_positives);
    return 100.0 * 2.0 * tp / (2.0 * tp + static_cast<double>(c.false_positives + c.false_negatives));
}

inline constexpr std::array<int, 3> kOverlapThresholds = {10, 25, 50};

struct MetricsReport {
    double accuracy = 0.0;
    double f1_macro = 0.0;
    double edit_score = 0.0;
    std::map<int, double> f1_at;  ///< keyed by k in {10, 25, 50}
    std::int64_t fw_frames = 0;
    double fw_seconds = 0.0;
};

inline MetricsReport evaluate_sequence(std::span<const int> pred, std::span<const int> gt, int n_classes) {
    MetricsReport r;
    r.accuracy = accuracy(pred, gt);
    r.f1_macro = f1_macro(pred, gt, n_classes);
    const auto ps = frames_to_segments(pred);
    const auto gs = frames_to_segments(gt);
    r.edit_score = edit_score(ps, gs);
    for (int k : kOverlapThresholds) r.f1_at[k] = f1_at_k(ps, gs, k);
    return r;
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"accuracy", r.accuracy}, {"f1_macro", r.f1_macro}, {"edit", r.edit_score},
                       {"fw_frames", r.fw_frames}, {"fw_seconds", r.fw_seconds}};
    for (const auto& [k, v] : r.f1_at) j["f1@" + std::to_string(k)] = v;
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
    j.at("accuracy").get_to(r.accuracy);
    j.at("f1_macro").get_to(r.f1_macro);
    j.at("edit").get_to(r.edit_score);
    r.fw_frames = j.value("fw_frames", std::int64_t{0});
    r.fw_seconds = j.value("fw_seconds", 0.0);
    for (int k : kOverlapThresholds) {
        const std::string key = "f1@" + std::to_string(k);
        if (j.contains(key)) r.f1_at[k] = j.at(key).get<double>();
    }
}

struct MetricsSummary {
    MetricsReport mean;
    MetricsReport stddev;  ///< population standard deviation across videos
};

/// Uniform per-video average. The window fields are copied from the first report.
inline MetricsSummary summarize(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw DomainError("cannot summarise zero reports");
    const double n = static_cast<double>(reports.size());
    auto fields = [](const MetricsReport& r) {
        std::vector<double> v{r.accuracy, r.f1_macro, r.edit_score};
        for (int k : kOverlapThresholds) v.push_back(r.f1_at.count(k) ? r.f1_at.at(k) : 0.0);
        return v;
    };
    auto assign = [](MetricsReport& r, const std::vector<double>& v) {
        r.accuracy = v[0];
        r.f1_macro = v[1];
        r.edit_score = v[2];
        for (std::size_t i = 0; i < kOverlapThresholds.size(); ++i) r.f1_at[kOverlapThresholds[i]] = v[3 + i];
    };
    std::vector<double> mean(3 + kOverlapThresholds.size(), 0.0), var(mean.size(), 0.0);
    for (const auto& r : reports) {
        const auto v = fields(r);
        for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i] / n;
    }
    for (const auto& r : reports) {
        const auto v = fields(r);
        for (std::size_t i = 0; i < v.size(); ++i) var[i] += (v[i] - mean[i]) * (v[i] - mean[i]) / n;
    }
    for (double& v : var) v = std::sqrt(v);
    MetricsSummary s;
    assign(s.mean, mean);
    assign(s.stddev, var);
    s.mean.fw_frames = s.stddev.fw_frames = reports.front().fw_frames;
    s.mean.fw_seconds = s.stddev.fw_seconds = reports.front().fw_seconds;
    return s;
}

/// Delayed-network performance relative to the best offline network.
inline double competitive_ratio(double perf_delayed, double perf_best_offline) {
    if (perf_best_offline == 0.0) throw DomainError("competitive ratio: offline performance is zero");
    return perf_delayed / perf_best_offline;
}

/// Best BF over best RR within one delay interval; above 1 means BF wins.
inline double local_competitive_ratio(double best_bf, double best_rr) {
    if (best_rr == 0.0) throw DomainError("local competitive ratio: RR performance is zero");
    return best_bf / best_rr;
}

}  // namespace bftcn
