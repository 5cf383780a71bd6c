// bftcn: command-line driver for the bounded-future segmentation models.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bftcn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t default_seed() {
    const char* env = std::getenv("BFTCN_SEED");
    if (env == nullptr || *env == '\0') return 0;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
        return v;
    } catch (const std::logic_error&) {
        throw bftcn::ValidationError(std::string("BFTCN_SEED is not an unsigned integer: '") + env + "'");
    }
}

// Architecture flags shared by window and train.
struct ArchFlags {
    std::string variant = "bf";
    int layers = 10;
    int lpg = -1;
    int lr = -1;
    int nr = 3;
    int wmax = 1;
    int fmaps = 64;
    double dropout = 0.5;
    double fps = 30.0;

    void add(CLI::App* app, bool training) {
        app->add_option("--variant", variant, "rr or bf")->check(CLI::IsMember({"rr", "bf"}));
        app->add_option("--l", layers, "layers per stage (sets both --lpg and --lr)");
        app->add_option("--lpg", lpg, "layers in the prediction generator");
        app->add_option("--lr", lr, "layers per refinement stage");
        app->add_option("--nr", nr, "number of refinement stages");
        app->add_option("--wmax", wmax, "per-layer future cap (bf only)");
        if (training) {
            app->add_option("--fmaps", fmaps, "feature maps per layer");
            app->add_option("--dropout", dropout, "dropout probability");
        } else {
            app->add_option("--fps", fps, "frame rate used to convert frames to seconds");
        }
    }

    bftcn::NetworkConfig config() const {
        bftcn::NetworkConfig c;
        c.variant = bftcn::parse_variant(variant);
        c.l_pg = lpg > 0 ? lpg : layers;
        c.l_r = lr > 0 ? lr : layers;
        c.n_r = nr;
        c.w_max = wmax;
        c.n_feature_maps = fmaps;
        c.dropout = dropout;
        c.frame_rate_hz = fps;
        return c;
    }
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_window(const ArchFlags& arch, bool enumerate, double budget) {
    if (!enumerate) {
        auto c = arch.config();
        c.validate();
        print_json(bftcn::window_json(c));
        return 0;
    }
    if (!(budget >= 0.0)) throw bftcn::ValidationError("--budget must be >= 0 seconds");
    bftcn::NetworkConfig base;
    base.frame_rate_hz = arch.fps;
    json rows = json::array();
    for (const auto& c : bftcn::enumerate_within_budget(bftcn::expand_grid(bftcn::default_search_grid(), base), budget)) {
        json row = bftcn::window_json(c);
        row["name"] = bftcn::run_name(c);
        rows.push_back(row);
    }
    print_json({{"budget_seconds", budget}, {"count", rows.size()}, {"configs", rows}});
    return 0;
}

struct TrainFlags {
    std::string train_manifest;
    std::string val_manifest;
    std::string out_dir = "run";
    int epochs = 40;
    int batch_size = 2;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    bool quiet = false;
};

std::vector<bftcn::Video> load_set(const std::string& path, bftcn::ClassList* classes = nullptr) {
    const auto m = bftcn::load_manifest(path);
    if (classes) *classes = m.classes;
    auto videos = bftcn::load_videos(m);
    if (videos.empty()) throw bftcn::ValidationError(path + ": manifest lists no videos");
    return videos;
}

int cmd_train(const ArchFlags& arch, const TrainFlags& f) {
    bftcn::ClassList classes;
    const auto train_set = load_set(f.train_manifest, &classes);
    std::vector<bftcn::Video> val_set;
    if (!f.val_manifest.empty()) {
        bftcn::ClassList val_classes;
        val_set = load_set(f.val_manifest, &val_classes);
        if (val_classes != classes) throw bftcn::ValidationError(f.val_manifest + ": class list differs from training manifest");
    }
    bftcn::NetworkConfig cfg = arch.config();
    cfg.n_classes = static_cast<int>(classes.size());
    cfg.n_features = static_cast<int>(train_set.front().features.channels());
    cfg.frame_rate_hz = train_set.front().fps;

    bftcn::TrainOptions opts;
    opts.epochs = f.epochs;
    opts.batch_size = f.batch_size;
    opts.seed = f.seed;
    opts.adam.learning_rate = f.learning_rate;
    if (!f.quiet) {
        opts.on_epoch = [](const bftcn::EpochRecord& e) {
            std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " acc " << e.validation.accuracy << " f1@50 "
                      << e.validation.f1_at.at(50) << "\n";
        };
    }
    const auto result = bftcn::train(bftcn::build_model(cfg, f.seed), train_set, val_set, opts);

    const fs::path out(f.out_dir);
    fs::create_directories(out);
    bftcn::save_checkpoint(out / "checkpoint.bftc", result.best, classes);
    bftcn::binary::write_text(out / "history.json", bftcn::history_to_json(result).dump(2) + "\n");
    json summary = bftcn::window_json(cfg);
    summary["checkpoint"] = (out / "checkpoint.bftc").string();
    summary["best_epoch"] = result.best_epoch;
    summary["steps"] = result.steps;
    print_json(summary);
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& manifest_path) {
    const auto ck = bftcn::load_checkpoint(model_path);
    const auto m = bftcn::load_manifest(manifest_path);
    if (m.classes != ck.classes) {
        throw bftcn::ValidationError(manifest_path + ": class list does not match checkpoint " + model_path);
    }
    const auto videos = bftcn::load_videos(m);
    if (videos.empty()) throw bftcn::ValidationError(manifest_path + ": manifest lists no videos");
    const auto reports = bftcn::evaluate_videos(ck.model, videos);
    json rows = json::array();
    for (std::size_t i = 0; i < videos.size(); ++i) rows.push_back({{"video", videos[i].name}, {"metrics", reports[i]}});
    const auto s = bftcn::summarize(reports);
    print_json({{"videos", rows}, {"summary", {{"mean", s.mean}, {"std", s.stddev}, {"count", videos.size()}}}});
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& features, const std::string& out,
                const std::string& format) {
    const auto ck = bftcn::load_checkpoint(model_path);
    const auto x = bftcn::read_features(features);
    const auto labels = bftcn::predict_labels(ck.model, x);
    const auto fmt = bftcn::parse_label_format(format);
    if (out.empty() || out == "-") {
        std::cout << bftcn::format_labels(labels, ck.classes, fmt == bftcn::LabelFormat::Auto ? bftcn::LabelFormat::Frames : fmt);
    } else {
        bftcn::write_labels(out, labels, ck.classes, fmt);
    }
    return 0;
}

int cmd_stream(const std::string& model_path, const std::string& features, const std::string& emit) {
    const auto ck = bftcn::load_checkpoint(model_path);
    const auto x = bftcn::read_features(features);
    bftcn::Stream stream = bftcn::open_stream(ck.model);
    json all = json::array();
    auto emit_out = [&](const std::vector<bftcn::StreamOutput>& outs) {
        for (const auto& o : outs) {
            json line{{"t", o.frame}, {"label", ck.classes[static_cast<std::size_t>(o.label)]}, {"probs", o.probs},
                      {"emitted_at_frame", o.emitted_at_frame}, {"delay_frames", o.delay_frames()}};
            if (emit == "jsonl") {
                std::cout << line.dump() << "\n";
            } else {
                all.push_back(std::move(line));
            }
        }
    };
    for (std::size_t t = 0; t < x.frames(); ++t) emit_out(stream.push(x.column(t)));
    emit_out(stream.close());
    if (emit == "json") print_json({{"delay_frames", stream.delay()}, {"outputs", all}});
    return 0;
}

int cmd_grid(const std::string& spec_path) {
    json j;
    try {
        j = json::parse(bftcn::binary::read_text(spec_path));
    } catch (const json::exception& e) {
        throw bftcn::ValidationError(spec_path + ": invalid JSON: " + e.what());
    }
    const auto spec = bftcn::parse_grid_spec(j, fs::path(spec_path).parent_path());
    json rows = json::array();
    for (const auto& o : bftcn::run_grid(spec)) {
        rows.push_back({{"name", o.name}, {"dir", o.dir.string()}, {"fw_frames", o.result.at("fw_frames")}});
        std::cerr << "done " << o.name << "\n";
    }
    print_json({{"out_dir", spec.out_dir.string()}, {"runs", rows}});
    return 0;
}

int cmd_report(const std::string& results, const std::string& metric, const std::string& json_out,
               const std::string& csv_out) {
    const auto rep = bftcn::build_report(bftcn::load_results(results, metric), metric);
    const json j = bftcn::report_to_json(rep);
    if (!csv_out.empty()) bftcn::binary::write_text(csv_out, bftcn::report_to_csv(rep));
    if (!json_out.empty()) {
        bftcn::binary::write_text(json_out, j.dump(2) + "\n");
    } else {
        print_json(j);
    }
    return 0;
}

struct SynthFlags {
    std::string out = "synthetic";
    int count = 4;
    double fps = 30.0;
    bftcn::SynthSpec spec;
};

int cmd_synth(const SynthFlags& f) {
    if (f.count < 1) throw bftcn::ValidationError("--count must be >= 1");
    const auto manifest = bftcn::write_synthetic_dataset(f.out, f.spec, f.count, f.fps);
    print_json({{"manifest", manifest.string()}, {"videos", f.count}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bounded-future temporal convolution networks for action segmentation"};
    app.require_subcommand(1);

    ArchFlags window_arch;
    bool enumerate = false;
    double budget = 1.0;
    auto* window = app.add_subcommand("window", "future window, delay and interval of an architecture");
    window_arch.add(window, false);
    window->add_flag("--enumerate", enumerate, "list default-grid architectures within --budget");
    window->add_option("--budget", budget, "delay budget in seconds");

    ArchFlags train_arch;
    TrainFlags tf;
    auto* train = app.add_subcommand("train", "train a model on a manifest");
    train_arch.add(train, true);
    train->add_option("--train", tf.train_manifest, "training manifest")->required();
    train->add_option("--val", tf.val_manifest, "validation manifest for model selection");
    train->add_option("--out-dir", tf.out_dir, "directory for checkpoint.bftc and history.json");
    train->add_option("--epochs", tf.epochs);
    train->add_option("--batch-size", tf.batch_size);
    train->add_option("--learning-rate", tf.learning_rate);
    train->add_option("--seed", tf.seed, "defaults to $BFTCN_SEED or 0");
    train->add_flag("--quiet", tf.quiet, "no per-epoch progress on stderr");

    std::string model_path, manifest_path, features, out, format = "frames", emit = "jsonl";
    auto* eval = app.add_subcommand("eval", "per-video metrics and mean/std summary");
    eval->add_option("--model", model_path)->required();
    eval->add_option("--manifest", manifest_path)->required();

    auto* predict = app.add_subcommand("predict", "offline label prediction for one feature file");
    predict->add_option("--model", model_path)->required();
    predict->add_option("--features", features)->required();
    predict->add_option("--out", out, "label file (stdout when omitted)");
    predict->add_option("--format", format)->check(CLI::IsMember({"frames", "segments"}));

    auto* stream = app.add_subcommand("stream", "frame-by-frame bounded-delay inference");
    stream->add_option("--model", model_path)->required();
    stream->add_option("--features", features)->required();
    stream->add_option("--emit", emit)->check(CLI::IsMember({"jsonl", "json"}));

    std::string spec_path;
    auto* grid = app.add_subcommand("grid", "train every architecture of a grid spec");
    grid->add_option("spec", spec_path, "grid spec JSON")->required();

    std::string results, metric = "f1@50", json_out, csv_out;
    auto* report = app.add_subcommand("report", "delay-interval table and competitive ratios");
    report->add_option("results", results, "directory searched for result.json files")->required();
    report->add_option("--metric", metric)->check(CLI::IsMember({"accuracy", "f1_macro", "edit", "f1@10", "f1@25", "f1@50"}));
    report->add_option("--json", json_out, "write JSON here instead of stdout");
    report->add_option("--csv", csv_out, "also write the interval table as CSV");

    SynthFlags sf;
    auto* synth = app.add_subcommand("synth", "write a seeded synthetic dataset");
    synth->add_option("--out", sf.out);
    synth->add_option("--count", sf.count);
    synth->add_option("--fps", sf.fps);
    synth->add_option("--seed", sf.spec.seed);
    synth->add_option("--means-seed", sf.spec.means_seed);
    synth->add_option("--classes", sf.spec.n_classes);
    synth->add_option("--dim", sf.spec.feature_dim);
    synth->add_option("--sigma", sf.spec.sigma);
    synth->add_option("--t-min", sf.spec.t_min);
    synth->add_option("--t-max", sf.spec.t_max);
    synth->add_option("--stay", sf.spec.stay_probability);
    synth->add_option("--min-dwell", sf.spec.min_dwell);

    try {
        tf.seed = default_seed();
        CLI11_PARSE(app, argc, argv);
        if (*window) return cmd_window(window_arch, enumerate, budget);
        if (*train) return cmd_train(train_arch, tf);
        if (*eval) return cmd_eval(model_path, manifest_path);
        if (*predict) return cmd_predict(model_path, features, out, format);
        if (*stream) return cmd_stream(model_path, features, emit);
        if (*grid) return cmd_grid(spec_path);
        if (*report) return cmd_report(results, metric, json_out, csv_out);
        if (*synth) return cmd_synth(sf);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
