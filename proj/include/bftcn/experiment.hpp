#pragma once

// Architecture grids, grid runs, and the delay-interval report with global
// and local competitive ratios.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bftcn/binary.hpp"
#include "bftcn/checkpoint.hpp"
#include "bftcn/data_io.hpp"
#include "bftcn/errors.hpp"
#include "bftcn/train.hpp"
#include "bftcn/window.hpp"
#include "json.hpp"

namespace bftcn {

/// One block of the architecture search. L_PG = L_R = L for every entry.
struct GridBlock {
    Variant variant = Variant::BF;
    std::vector<int> layers;
    std::vector<int> refinement_stages;
    std::vector<int> w_max{0};  ///< ignored for RR
};

/// The search used for the delay study: 28 RR and 292 BF architectures.
inline std::vector<GridBlock> default_search_grid() {
    return {
        {Variant::RR, {2, 3, 4, 5, 6, 8, 10}, {0, 1, 2, 3}, {0}},
        {Variant::BF, {6, 8, 10}, {0, 1, 2, 3}, {0, 1, 2, 3, 6, 7, 8, 10, 12, 13, 14, 15, 16, 17, 20}},
        {Variant::BF, {2, 3, 4, 5}, {0, 1, 2, 3}, {1, 3, 7, 10, 12, 15, 17}},
    };
}

/// Expand grid blocks into configs, copying the non-architecture fields from `base`.
inline std::vector<NetworkConfig> expand_grid(const std::vector<GridBlock>& blocks, const NetworkConfig& base) {
    std::vector<NetworkConfig> out;
    for (const auto& b : blocks) {
        if (b.layers.empty() || b.refinement_stages.empty() || (b.variant == Variant::BF && b.w_max.empty())) {
            throw ValidationError("grid block has an empty value list");
        }
        const std::vector<int> wmax = b.variant == Variant::RR ? std::vector<int>{0} : b.w_max;
        for (int l : b.layers) {
            for (int nr : b.refinement_stages) {
                for (int w : wmax) {
                    NetworkConfig c = base;
                    c.variant = b.variant;
                    c.l_pg = c.l_r = l;
                    c.n_r = nr;
                    c.w_max = w;
                    c.validate();
                    out.push_back(c);
                }
            }
        }
    }
    return out;
}

/// Configs whose future window fits within `budget_seconds`.
inline std::vector<NetworkConfig> enumerate_within_budget(const std::vector<NetworkConfig>& configs, double budget_seconds) {
    std::vector<NetworkConfig> out;
    for (const auto& c : configs) {
        if (future_window_seconds(c) <= budget_seconds) out.push_back(c);
    }
    return out;
}

inline std::string run_name(const NetworkConfig& c) {
    std::string name = to_string(c.variant) + "_L" + std::to_string(c.l_pg) + "_nr" + std::to_string(c.n_r);
    if (c.variant == Variant::BF) name += "_w" + std::to_string(c.w_max);
    return name;
}

inline nlohmann::json window_json(const NetworkConfig& c) {
    const DelayBucket b = bucket_delay(future_window_seconds(c));
    return {{"variant", to_string(c.variant)}, {"l_pg", c.l_pg}, {"l_r", c.l_r}, {"n_r", c.n_r},
            {"w_max", c.w_max}, {"fw_frames", future_window(c)}, {"fw_seconds", future_window_seconds(c)},
            {"bucket", b.label()}, {"bucket_index", b.index}, {"causal", future_window(c) == 0}};
}

/// Everything needed to run a grid: architectures, shared hyperparameters and data.
struct GridSpec {
    std::vector<GridBlock> blocks;
    NetworkConfig base;
    TrainOptions train;
    std::filesystem::path train_manifest;
    std::filesystem::path val_manifest;   ///< optional
    std::filesystem::path test_manifest;  ///< optional; validation set is scored when absent
    std::filesystem::path out_dir;
};

/// Parse a grid JSON document. Paths are resolved against `base_dir`.
inline GridSpec parse_grid_spec(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    GridSpec g;
    try {
        auto blocks = j.contains("blocks") ? j.at("blocks") : nlohmann::json::array({j});
        for (const auto& b : blocks) {
            std::vector<std::string> variants = b.contains("variants") ? b.at("variants").get<std::vector<std::string>>()
                                                                      : std::vector<std::string>{b.value("variant", "bf")};
            for (const auto& v : variants) {
                GridBlock blk;
                blk.variant = parse_variant(v);
                blk.layers = b.at("L").get<std::vector<int>>();
                blk.refinement_stages = b.at("n_r").get<std::vector<int>>();
                if (b.contains("w_max")) blk.w_max = b.at("w_max").get<std::vector<int>>();
                g.blocks.push_back(blk);
            }
        }
        g.base.n_feature_maps = j.value("n_feature_maps", 64);
        g.base.dropout = j.value("dropout", 0.5);
        g.base.frame_rate_hz = j.value("fps", 30.0);
        g.train.epochs = j.value("epochs", 40);
        g.train.batch_size = j.value("batch_size", 2);
        g.train.seed = j.value("seed", std::uint64_t{0});
        g.train.adam.learning_rate = j.value("learning_rate", 0.001);
        g.train.loss.lambda = j.value("lambda", 1.0);
        g.train.loss.tau = j.value("tau", 4.0);
        g.train_manifest = base_dir / j.at("train").get<std::string>();
        if (j.contains("val")) g.val_manifest = base_dir / j.at("val").get<std::string>();
        if (j.contains("test")) g.test_manifest = base_dir / j.at("test").get<std::string>();
        g.out_dir = base_dir / j.value("out_dir", std::string("runs"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed grid spec: ") + e.what());
    }
    return g;
}

struct RunOutcome {
    std::string name;
    std::filesystem::path dir;
    nlohmann::json result;
};

/// Train one architecture and write checkpoint.bftc, history.json and result.json into `dir`.
inline RunOutcome run_experiment(const NetworkConfig& cfg, const TrainOptions& opts, const Manifest& train_manifest,
                                 std::span<const Video> train_set, std::span<const Video> val_set,
                                 std::span<const Video> test_set, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Model init = build_model(cfg, opts.seed);
    const TrainResult tr = train(init, train_set, val_set, opts);
    save_checkpoint(dir / "checkpoint.bftc", tr.best, train_manifest.classes);
    binary::write_text(dir / "history.json", history_to_json(tr).dump(2) + "\n");

    const auto scored = !test_set.empty() ? test_set : (!val_set.empty() ? val_set : train_set);
    const MetricsSummary s = evaluate(tr.best, scored);
    nlohmann::json result = window_json(cfg);
    result["name"] = run_name(cfg);
    result["config"] = cfg;
    result["offline"] = cfg.variant == Variant::RR;
    result["best_epoch"] = tr.best_epoch;
    result["metrics"] = s.mean;
    result["metrics_std"] = s.stddev;
    binary::write_text(dir / "result.json", result.dump(2) + "\n");
    return {run_name(cfg), dir, result};
}

/// Run every architecture of the grid sequentially; each run gets its own
/// directory under out_dir. Runs whose result.json already exists are skipped.
inline std::vector<RunOutcome> run_grid(const GridSpec& g) {
    const Manifest train_m = load_manifest(g.train_manifest);
    const auto train_set = load_videos(train_m);
    if (train_set.empty()) throw ValidationError(g.train_manifest.string() + ": no training videos");
    std::vector<Video> val_set, test_set;
    if (!g.val_manifest.empty()) val_set = load_videos(load_manifest(g.val_manifest));
    if (!g.test_manifest.empty()) test_set = load_videos(load_manifest(g.test_manifest));

    NetworkConfig base = g.base;
    base.n_classes = static_cast<int>(train_m.classes.size());
    base.n_features = static_cast<int>(train_set.front().features.channels());
    base.frame_rate_hz = train_m.videos.front().fps;

    std::vector<RunOutcome> out;
    for (const auto& cfg : expand_grid(g.blocks, base)) {
        const auto dir = g.out_dir / run_name(cfg);
        if (std::filesystem::exists(dir / "result.json")) {
            out.push_back({run_name(cfg), dir, nlohmann::json::parse(binary::read_text(dir / "result.json"))});
            continue;
        }
        out.push_back(run_experiment(cfg, g.train, train_m, train_set, val_set, test_set, dir));
    }
    return out;
}

struct RunSummary {
    std::string name;
    Variant variant = Variant::BF;
    bool offline = false;
    double fw_seconds = 0.0;
    int bucket = 0;
    double score = 0.0;
};

struct IntervalBest {
    std::optional<RunSummary> bf;
    std::optional<RunSummary> rr;
};

struct DelayReport {
    std::string metric;
    RunSummary best_offline;
    std::vector<RunSummary> runs;
    std::vector<IntervalBest> intervals;  ///< one per delay bucket
};

/// Read one result.json-shaped document. Runs are offline (acausal baselines)
/// when marked so explicitly, otherwise when they are RR networks.
inline RunSummary parse_run(const nlohmann::json& j, const std::string& metric, const std::string& fallback_name) {
    RunSummary r;
    try {
        r.name = j.value("name", fallback_name);
        const std::string variant =
            j.contains("variant") ? j.at("variant").get<std::string>() : j.at("config").at("variant").get<std::string>();
        r.variant = parse_variant(variant);
        r.offline = j.contains("offline") ? j.at("offline").get<bool>() : r.variant == Variant::RR;
        if (j.contains("fw_seconds")) {
            r.fw_seconds = j.at("fw_seconds").get<double>();
        } else {
            r.fw_seconds = future_window_seconds(j.at("config").get<NetworkConfig>());
        }
        r.score = j.at("metrics").at(metric).get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fallback_name + ": malformed result: " + e.what());
    }
    r.bucket = bucket_delay(r.fw_seconds).index;
    return r;
}

inline DelayReport build_report(const std::vector<RunSummary>& runs, const std::string& metric) {
    if (runs.empty()) throw ValidationError("report: no completed runs");
    DelayReport rep;
    rep.metric = metric;
    rep.runs = runs;
    const RunSummary* best_offline = nullptr;
    for (const auto& r : runs) {
        if (r.offline && (!best_offline || r.score > best_offline->score)) best_offline = &r;
    }
    if (!best_offline) throw ValidationError("report: no acausal (offline) baseline run present");
    if (best_offline->score <= 0.0) throw DomainError("report: offline baseline scores zero");
    rep.best_offline = *best_offline;

    rep.intervals.resize(kDelayBucketCount);
    for (const auto& r : runs) {
        auto& slot = r.variant == Variant::BF ? rep.intervals[static_cast<std::size_t>(r.bucket)].bf
                                              : rep.intervals[static_cast<std::size_t>(r.bucket)].rr;
        if (!slot || r.score > slot->score) slot = r;
    }
    return rep;
}

inline std::vector<RunSummary> load_results(const std::filesystem::path& results_dir, const std::string& metric) {
    if (!std::filesystem::is_directory(results_dir)) throw IoError("results directory '" + results_dir.string() + "' not found");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(results_dir)) {
        if (e.is_regular_file() && e.path().filename() == "result.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RunSummary> runs;
    for (const auto& f : files) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(binary::read_text(f));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(f.string() + ": invalid JSON: " + e.what());
        }
        runs.push_back(parse_run(j, metric, f.parent_path().filename().string()));
    }
    return runs;
}

inline nlohmann::json report_to_json(const DelayReport& rep) {
    const double base = rep.best_offline.score;
    auto run_json = [&](const RunSummary& r) {
        return nlohmann::json{{"name", r.name}, {"variant", to_string(r.variant)}, {"offline", r.offline},
                              {"fw_seconds", r.fw_seconds}, {"bucket", delay_bucket_at(r.bucket).label()},
                              {rep.metric, r.score}, {"global_ratio", competitive_ratio(r.score, base)}};
    };
    nlohmann::json j;
    j["metric"] = rep.metric;
    j["best_offline"] = run_json(rep.best_offline);
    j["runs"] = nlohmann::json::array();
    for (const auto& r : rep.runs) j["runs"].push_back(run_json(r));
    j["intervals"] = nlohmann::json::array();
    for (std::size_t i = 0; i < rep.intervals.size(); ++i) {
        const auto& iv = rep.intervals[i];
        const DelayBucket b = delay_bucket_at(static_cast<int>(i));
        nlohmann::json row{{"interval", b.label()}, {"lower", b.lower}, {"empty", !iv.bf && !iv.rr}};
        row["upper"] = std::isinf(b.upper) ? nlohmann::json(nullptr) : nlohmann::json(b.upper);
        row["bf"] = iv.bf ? run_json(*iv.bf) : nlohmann::json(nullptr);
        row["rr"] = iv.rr ? run_json(*iv.rr) : nlohmann::json(nullptr);
        row["local_ratio"] = iv.bf && iv.rr && iv.rr->score > 0.0
                                 ? nlohmann::json(local_competitive_ratio(iv.bf->score, iv.rr->score))
                                 : nlohmann::json(nullptr);
        j["intervals"].push_back(row);
    }
    return j;
}

/// One CSV row per delay interval; missing values are left blank.
inline std::string report_to_csv(const DelayReport& rep) {
    const double base = rep.best_offline.score;
    std::ostringstream out;
    out.precision(10);
    out << "interval,bf_run,bf_" << rep.metric << ",bf_global_ratio,rr_run,rr_" << rep.metric
        << ",rr_global_ratio,local_ratio\n";
    for (std::size_t i = 0; i < rep.intervals.size(); ++i) {
        const auto& iv = rep.intervals[i];
        out << '"' << delay_bucket_at(static_cast<int>(i)).label() << '"';
        for (const auto* side : {&iv.bf, &iv.rr}) {
            if (*side) {
                out << ',' << (*side)->name << ',' << (*side)->score << ',' << competitive_ratio((*side)->score, base);
            } else {
                out << ",,,";
            }
        }
        out << ',';
        if (iv.bf && iv.rr && iv.rr->score > 0.0) out << local_competitive_ratio(iv.bf->score, iv.rr->score);
        out << '\n';
    }
    return out.str();
}

}  // namespace bftcn
