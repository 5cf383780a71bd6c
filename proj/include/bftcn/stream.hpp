#pragma once

// Online inference with a bounded delay. Frames are pushed one at a time and
// every network node (pointwise projection, residual layer, prediction head)
// computes an output column as soon as its input columns up to t + m are
// available, where m is the node's future reach. The final output for frame t
// is therefore ready exactly when frame t + future_window has been pushed.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <span>
#include <variant>
#include <vector>

#include "bftcn/errors.hpp"
#include "bftcn/layers.hpp"
#include "bftcn/model.hpp"
#include "bftcn/window.hpp"

namespace bftcn {

struct StreamOutput {
    std::int64_t frame = 0;
    std::vector<double> probs;
    int label = 0;
    std::int64_t emitted_at_frame = 0;  ///< index of the last ingested frame when this output was produced

    std::int64_t delay_frames() const { return emitted_at_frame - frame; }
};

namespace detail {

using ColumnAt = std::span<const double>;

// Column evaluations mirror the offline loops term by term: bias, then taps
// in order, then input channels.
inline std::vector<double> pointwise_column(const PointwiseConv& conv, std::span<const double> x) {
    std::vector<double> out(conv.out_channels);
    for (std::size_t o = 0; o < conv.out_channels; ++o) {
        double acc = conv.bias[o];
        for (std::size_t i = 0; i < conv.in_channels; ++i) acc += conv.w(o, i) * x[i];
        out[o] = acc;
    }
    return out;
}

template <class Access>
std::vector<double> dilated_column(const DilatedConv& conv, const Access& at, std::int64_t t) {
    std::array<std::span<const double>, DilatedConv::kKernel> taps;
    for (int k = 0; k < DilatedConv::kKernel; ++k) taps[static_cast<std::size_t>(k)] = at(t + conv.tap_offset(k));
    std::vector<double> out(conv.out_channels);
    for (std::size_t o = 0; o < conv.out_channels; ++o) {
        double acc = conv.bias[o];
        for (int k = 0; k < DilatedConv::kKernel; ++k) {
            const auto& col = taps[static_cast<std::size_t>(k)];
            if (col.empty()) continue;  // zero padding
            for (std::size_t i = 0; i < conv.in_channels; ++i) acc += conv.w(o, i, k) * col[i];
        }
        out[o] = acc;
    }
    return out;
}

inline void relu_inplace(std::vector<double>& v) {
    for (double& x : v) x = std::max(x, 0.0);
}

struct ProjectNode {
    const PointwiseConv* conv;
    std::int64_t future() const { return 0; }
    std::int64_t past() const { return 0; }
    template <class Access>
    std::vector<double> compute(const Access& at, std::int64_t t) const {
        return pointwise_column(*conv, at(t));
    }
};

struct HeadNode {
    const PointwiseConv* conv;
    std::int64_t future() const { return 0; }
    std::int64_t past() const { return 0; }
    template <class Access>
    std::vector<double> compute(const Access& at, std::int64_t t) const {
        std::vector<double> logits = pointwise_column(*conv, at(t));
        softmax_column(logits);
        return logits;
    }
};

struct DrlNode {
    const DilatedResidualLayer* layer;
    std::int64_t future() const { return layer->conv.future_pad; }
    std::int64_t past() const { return layer->conv.past_reach(); }
    template <class Access>
    std::vector<double> compute(const Access& at, std::int64_t t) const {
        std::vector<double> h = dilated_column(layer->conv, at, t);
        relu_inplace(h);
        std::vector<double> y = pointwise_column(layer->out, h);
        const auto x = at(t);
        for (std::size_t c = 0; c < y.size(); ++c) y[c] = x[c] + y[c];
        return y;
    }
};

struct DdrlNode {
    const DualDilatedResidualLayer* layer;
    std::int64_t future() const { return std::max(layer->branch1.future_pad, layer->branch2.future_pad); }
    std::int64_t past() const { return std::max(layer->branch1.past_reach(), layer->branch2.past_reach()); }
    template <class Access>
    std::vector<double> compute(const Access& at, std::int64_t t) const {
        std::vector<double> cat = dilated_column(layer->branch1, at, t);
        const std::vector<double> b2 = dilated_column(layer->branch2, at, t);
        cat.insert(cat.end(), b2.begin(), b2.end());
        std::vector<double> h = pointwise_column(layer->merge, cat);
        relu_inplace(h);
        std::vector<double> y = pointwise_column(layer->out, h);
        const auto x = at(t);
        for (std::size_t c = 0; c < y.size(); ++c) y[c] = x[c] + y[c];
        return y;
    }
};

using NodeKind = std::variant<ProjectNode, HeadNode, DrlNode, DdrlNode>;

/// One node's sliding window over its input columns.
struct StreamNode {
    NodeKind kind;
    std::int64_t future = 0;
    std::int64_t past = 0;
    std::deque<std::vector<double>> buffer;
    std::int64_t buffer_start = 0;  ///< absolute frame index of buffer.front()
    std::int64_t received = 0;
    std::int64_t next_out = 0;
    std::size_t peak_buffered = 0;

    explicit StreamNode(NodeKind k) : kind(k) {
        std::visit([&](const auto& n) {
            future = n.future();
            past = n.past();
        }, kind);
    }

    void feed(std::vector<double> column) {
        buffer.push_back(std::move(column));
        ++received;
        peak_buffered = std::max(peak_buffered, buffer.size());
    }

    /// Produce every output computable now. When `final` is set the input has
    /// ended and frames past the end read as zero padding.
    template <class Sink>
    void drain(bool final, Sink&& sink) {
        auto at = [&](std::int64_t j) -> std::span<const double> {
            if (j < 0 || j >= received) return {};
            return buffer[static_cast<std::size_t>(j - buffer_start)];
        };
        while (next_out < received && (final || next_out + future < received)) {
            std::vector<double> out = std::visit([&](const auto& n) { return n.compute(at, next_out); }, kind);
            ++next_out;
            while (!buffer.empty() && buffer_start < next_out - past) {
                buffer.pop_front();
                ++buffer_start;
            }
            sink(std::move(out));
        }
    }
};

}  // namespace detail

/// Incremental evaluator over an immutable model. The model must outlive the stream.
/// Dropout is never applied.
class Stream {
public:
    explicit Stream(const Model& model) : model_(&model), delay_(future_window(model.config)) {
        auto add = [&](detail::NodeKind k) { nodes_.emplace_back(k); };
        add(detail::ProjectNode{&model.generator.input});
        for (const auto& l : model.generator.layers) add(detail::DdrlNode{&l});
        add(detail::HeadNode{&model.generator.head});
        for (const auto& stage : model.refinements) {
            add(detail::ProjectNode{&stage.input});
            for (const auto& l : stage.layers) add(detail::DrlNode{&l});
            add(detail::HeadNode{&stage.head});
        }
    }

    /// Frames of delay between input and finalized output.
    std::int64_t delay() const { return delay_; }
    std::int64_t ingested() const { return ingested_; }
    std::int64_t emitted() const { return emitted_; }
    bool closed() const { return closed_; }

    std::vector<StreamOutput> push(std::span<const double> features) {
        if (closed_) throw StreamError("push after close");
        if (features.size() != static_cast<std::size_t>(model_->config.n_features)) {
            throw StreamError("frame has " + std::to_string(features.size()) + " features, model expects " +
                              std::to_string(model_->config.n_features));
        }
        ++ingested_;
        nodes_.front().feed(std::vector<double>(features.begin(), features.end()));
        return run(false);
    }

    /// Flush the remaining outputs, padding the future with zero frames.
    std::vector<StreamOutput> close() {
        if (closed_) throw StreamError("stream already closed");
        closed_ = true;
        return run(true);
    }

    /// Columns currently held across all node windows.
    std::size_t buffered_columns() const {
        std::size_t n = 0;
        for (const auto& node : nodes_) n += node.buffer.size();
        return n;
    }

    /// Largest window each node has held, with the node's (past, future) reach.
    struct NodeUsage {
        std::size_t peak;
        std::int64_t past;
        std::int64_t future;
    };
    std::vector<NodeUsage> node_usage() const {
        std::vector<NodeUsage> out;
        for (const auto& node : nodes_) out.push_back({node.peak_buffered, node.past, node.future});
        return out;
    }

private:
    std::vector<StreamOutput> run(bool final) {
        std::vector<StreamOutput> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const bool last = i + 1 == nodes_.size();
            nodes_[i].drain(final, [&](std::vector<double> col) {
                if (!last) {
                    nodes_[i + 1].feed(std::move(col));
                    return;
                }
                StreamOutput o;
                o.frame = emitted_++;
                o.label = static_cast<int>(std::max_element(col.begin(), col.end()) - col.begin());
                o.probs = std::move(col);
                o.emitted_at_frame = ingested_ - 1;
                out.push_back(std::move(o));
            });
        }
        return out;
    }

    const Model* model_;
    std::int64_t delay_;
    std::vector<detail::StreamNode> nodes_;
    std::int64_t ingested_ = 0;
    std::int64_t emitted_ = 0;
    bool closed_ = false;
};

inline Stream open_stream(const Model& model) { return Stream(model); }

}  // namespace bftcn
