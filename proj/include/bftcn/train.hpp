#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "bftcn/adam.hpp"
#include "bftcn/data_io.hpp"
#include "bftcn/errors.hpp"
#include "bftcn/loss.hpp"
#include "bftcn/metrics.hpp"
#include "bftcn/model.hpp"
#include "bftcn/rng.hpp"
#include "json.hpp"

namespace bftcn {

struct EpochRecord {
    int epoch = 0;  ///< 1-based
    double train_loss = 0.0;  ///< mean per-video loss over the epoch
    MetricsReport validation;  ///< per-video mean
};

struct TrainOptions {
    int epochs = 40;
    int batch_size = 2;
    std::uint64_t seed = 0;
    AdamOptions adam;
    LossConfig loss;
    std::function<void(const EpochRecord&)> on_epoch;  ///< optional progress callback
};

struct TrainResult {
    Model best;
    int best_epoch = 0;
    std::uint64_t steps = 0;
    std::vector<EpochRecord> history;
};

/// Per-video metrics of the offline predictions, averaged uniformly across videos.
inline std::vector<MetricsReport> evaluate_videos(const Model& model, std::span<const Video> videos) {
    std::vector<MetricsReport> out;
    for (const auto& v : videos) {
        MetricsReport r = evaluate_sequence(predict_labels(model, v.features), v.labels, model.config.n_classes);
        r.fw_frames = future_window(model.config);
        r.fw_seconds = future_window_seconds(model.config);
        out.push_back(r);
    }
    return out;
}

inline MetricsSummary evaluate(const Model& model, std::span<const Video> videos) {
    if (videos.empty()) throw DomainError("evaluation set is empty");
    return summarize(evaluate_videos(model, videos));
}

/// Loss and parameter gradient for one video in training mode.
inline std::pair<double, Model> video_gradient(const Model& model, const Video& v, const LossConfig& lc, Rng& rng) {
    const ModelTrace tr = forward_trace(model, v.features, {true, &rng});
    const auto probs = tr.probs();
    const LossResult loss = mstcn_loss(probs, v.labels, lc);
    return {loss.value, backward(model, tr, loss.grad_logits)};
}

/// Mini-batch Adam training. Each epoch shuffles the videos, averages the
/// gradients of batch_size videos per step, and scores the validation set by
/// F1@50; the parameters of the best-scoring epoch (earliest on ties) are
/// returned. An empty validation set falls back to the training set.
inline TrainResult train(Model model, std::span<const Video> train_set, std::span<const Video> val_set,
                         const TrainOptions& opts) {
    if (train_set.empty()) throw DomainError("training set is empty");
    if (opts.epochs < 1 || opts.batch_size < 1) throw DomainError("epochs and batch size must be >= 1");
    for (const auto& v : train_set) {
        if (v.features.channels() != static_cast<std::size_t>(model.config.n_features)) {
            throw ShapeError("video '" + v.name + "' has " + std::to_string(v.features.channels()) +
                             " feature channels, model expects " + std::to_string(model.config.n_features));
        }
    }
    const std::span<const Video> selection = val_set.empty() ? train_set : val_set;

    Rng rng(opts.seed);
    OptimizerState state(opts.adam, parameter_count(model));
    TrainResult result;
    double best_score = -1.0;
    std::vector<std::size_t> order(train_set.size());

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(opts.batch_size));
            const double weight = 1.0 / static_cast<double>(end - b);
            Model acc = zeros_like(model);
            for (std::size_t k = b; k < end; ++k) {
                auto [loss, grad] = video_gradient(model, train_set[order[k]], opts.loss, rng);
                loss_sum += loss;
                axpy(acc, grad, weight);
            }
            adam_step(state, model, acc);
            ++result.steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_set.size());
        rec.validation = evaluate(model, selection).mean;
        result.history.push_back(rec);
        if (rec.validation.f1_at.at(50) > best_score) {
            best_score = rec.validation.f1_at.at(50);
            result.best = model;
            result.best_epoch = epoch;
        }
        if (opts.on_epoch) opts.on_epoch(rec);
    }
    return result;
}

inline nlohmann::json history_to_json(const TrainResult& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.history) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation", e.validation}});
    }
    return {{"best_epoch", r.best_epoch}, {"steps", r.steps}, {"epochs", epochs}};
}

}  // namespace bftcn
