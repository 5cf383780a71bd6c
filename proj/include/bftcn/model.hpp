#pragma once

// Multi-stage temporal convolutional network: one prediction-generator stage
// built from dual dilated residual layers, followed by refinement stages built
// from dilated residual layers. Each refinement stage consumes the softmax
// output of the stage before it.

#include <concepts>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "bftcn/errors.hpp"
#include "bftcn/layers.hpp"
#include "bftcn/matrix.hpp"
#include "bftcn/rng.hpp"
#include "bftcn/window.hpp"

namespace bftcn {

struct DilatedResidualLayer {
    DilatedConv conv;
    PointwiseConv out;
};

struct DualDilatedResidualLayer {
    DilatedConv branch1;  ///< dilation 2^(l-1)
    DilatedConv branch2;  ///< dilation 2^(L-l)
    PointwiseConv merge;  ///< 2F -> F
    PointwiseConv out;
};

template <class Layer>
struct Stage {
    PointwiseConv input;
    std::vector<Layer> layers;
    PointwiseConv head;
};

using GeneratorStage = Stage<DualDilatedResidualLayer>;
using RefinementStage = Stage<DilatedResidualLayer>;

struct Model {
    NetworkConfig config;
    std::uint64_t seed = 0;
    GeneratorStage generator;
    std::vector<RefinementStage> refinements;

    std::size_t stage_count() const { return 1 + refinements.size(); }
};

/// Visit every convolution in checkpoint order: generator (input, layers, head)
/// then each refinement stage (input, layers, head).
template <class M, class F>
    requires std::same_as<std::remove_const_t<M>, Model>
void for_each_conv(M& model, F&& f) {
    f(model.generator.input);
    for (auto& l : model.generator.layers) {
        f(l.branch1);
        f(l.branch2);
        f(l.merge);
        f(l.out);
    }
    f(model.generator.head);
    for (auto& stage : model.refinements) {
        f(stage.input);
        for (auto& l : stage.layers) {
            f(l.conv);
            f(l.out);
        }
        f(stage.head);
    }
}

/// All parameter tensors (weight then bias of each convolution) in checkpoint order.
inline std::vector<std::span<double>> tensors(Model& model) {
    std::vector<std::span<double>> out;
    for_each_conv(model, [&](auto& conv) {
        out.emplace_back(conv.weight);
        out.emplace_back(conv.bias);
    });
    return out;
}

inline std::vector<std::span<const double>> tensors(const Model& model) {
    std::vector<std::span<const double>> out;
    for_each_conv(model, [&](const auto& conv) {
        out.emplace_back(conv.weight);
        out.emplace_back(conv.bias);
    });
    return out;
}

inline std::size_t parameter_count(const Model& model) {
    std::size_t n = 0;
    for (auto t : tensors(model)) n += t.size();
    return n;
}

inline Model zeros_like(const Model& model) {
    Model z = model;
    for (auto t : tensors(z)) std::fill(t.begin(), t.end(), 0.0);
    return z;
}

/// acc += scale * g, tensor by tensor.
inline void axpy(Model& acc, const Model& g, double scale = 1.0) {
    auto a = tensors(acc);
    auto b = tensors(g);
    if (a.size() != b.size()) throw ShapeError("axpy: models have different structure");
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].size() != b[k].size()) throw ShapeError("axpy: tensor sizes differ");
        for (std::size_t i = 0; i < a[k].size(); ++i) a[k][i] += scale * b[k][i];
    }
}

/// Build a model whose convolution paddings realise the configured future
/// window: RR pads symmetrically (m = dilation), BF caps m at w_max.
inline Model build_model(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto f = static_cast<std::size_t>(cfg.n_feature_maps);
    const auto classes = static_cast<std::size_t>(cfg.n_classes);
    auto conv = [&](std::int64_t dilation) { return DilatedConv(f, f, dilation, future_pad(cfg, dilation)); };

    Model m;
    m.config = cfg;
    m.seed = seed;
    m.generator.input = PointwiseConv(static_cast<std::size_t>(cfg.n_features), f);
    for (int l = 1; l <= cfg.l_pg; ++l) {
        const Dilations d = dilation_factors(cfg, {StageKind::PredictionGenerator, l});
        m.generator.layers.push_back({conv(d.first), conv(*d.second), PointwiseConv(2 * f, f), PointwiseConv(f, f)});
    }
    m.generator.head = PointwiseConv(f, classes);
    for (int s = 0; s < cfg.n_r; ++s) {
        RefinementStage stage;
        stage.input = PointwiseConv(classes, f);
        for (int l = 1; l <= cfg.l_r; ++l) {
            stage.layers.push_back({conv(dilation_factors(cfg, {StageKind::Refinement, l}).first), PointwiseConv(f, f)});
        }
        stage.head = PointwiseConv(f, classes);
        m.refinements.push_back(std::move(stage));
    }

    Rng rng(seed);
    for_each_conv(m, [&](auto& c) { init_uniform(c, rng); });
    return m;
}

/// Dropout settings for one forward pass. Masks are drawn from rng in layer order.
struct ForwardMode {
    bool training = false;
    Rng* rng = nullptr;
};

struct DrlTrace {
    Matrix input;
    Matrix pre_relu;
    Matrix hidden;
    Matrix mask;  ///< empty when dropout was inactive
};

struct DdrlTrace {
    Matrix input;
    Matrix concat;
    Matrix pre_relu;
    Matrix hidden;
    Matrix mask;
};

template <class LayerTrace>
struct StageTrace {
    Matrix input;
    std::vector<LayerTrace> layers;
    Matrix final_hidden;
    Matrix logits;
    Matrix probs;
};

struct ModelTrace {
    StageTrace<DdrlTrace> generator;
    std::vector<StageTrace<DrlTrace>> refinements;

    /// Per-stage probabilities, generator first.
    std::vector<Matrix> probs() const {
        std::vector<Matrix> out{generator.probs};
        for (const auto& r : refinements) out.push_back(r.probs);
        return out;
    }
};

namespace detail {

inline Matrix maybe_mask(const Matrix& like, double p, const ForwardMode& mode) {
    if (!mode.training || p == 0.0) return {};
    if (mode.rng == nullptr) throw DomainError("training-mode forward requires an rng");
    return dropout_mask(like.channels(), like.frames(), p, *mode.rng);
}

inline void accumulate(DilatedConv& acc, const LayerGrad& g) {
    for (std::size_t i = 0; i < g.weight.size(); ++i) acc.weight[i] += g.weight[i];
    for (std::size_t i = 0; i < g.bias.size(); ++i) acc.bias[i] += g.bias[i];
}

inline void accumulate(PointwiseConv& acc, const LayerGrad& g) {
    for (std::size_t i = 0; i < g.weight.size(); ++i) acc.weight[i] += g.weight[i];
    for (std::size_t i = 0; i < g.bias.size(); ++i) acc.bias[i] += g.bias[i];
}

}  // namespace detail

/// y = x + Dropout(W_out * ReLU(conv(x))).
inline Matrix drl_forward(const DilatedResidualLayer& layer, const Matrix& x, double p, const ForwardMode& mode,
                          DrlTrace* trace = nullptr) {
    Matrix pre = layer.conv.forward(x);
    Matrix hidden = relu(pre);
    Matrix branch = layer.out.forward(hidden);
    Matrix mask = detail::maybe_mask(branch, p, mode);
    if (!mask.empty()) branch = apply_mask(std::move(branch), mask);
    Matrix y = x + branch;
    if (trace) *trace = {x, std::move(pre), std::move(hidden), std::move(mask)};
    return y;
}

/// y = x + Dropout(W_out * ReLU(W_merge * [conv1(x); conv2(x)])).
inline Matrix ddrl_forward(const DualDilatedResidualLayer& layer, const Matrix& x, double p, const ForwardMode& mode,
                           DdrlTrace* trace = nullptr) {
    Matrix cat = concat_channels(layer.branch1.forward(x), layer.branch2.forward(x));
    Matrix pre = layer.merge.forward(cat);
    Matrix hidden = relu(pre);
    Matrix branch = layer.out.forward(hidden);
    Matrix mask = detail::maybe_mask(branch, p, mode);
    if (!mask.empty()) branch = apply_mask(std::move(branch), mask);
    Matrix y = x + branch;
    if (trace) *trace = {x, std::move(cat), std::move(pre), std::move(hidden), std::move(mask)};
    return y;
}

/// Returns the gradient w.r.t. the layer input; parameter gradients are added into `grads`.
inline Matrix drl_backward(const DilatedResidualLayer& layer, const DrlTrace& tr, const Matrix& grad_out,
                           DilatedResidualLayer& grads) {
    Matrix g_branch = tr.mask.empty() ? grad_out : apply_mask(grad_out, tr.mask);
    LayerGrad g_out = layer.out.backward(tr.hidden, g_branch);
    detail::accumulate(grads.out, g_out);
    LayerGrad g_conv = layer.conv.backward(tr.input, relu_backward(tr.pre_relu, std::move(g_out.input)));
    detail::accumulate(grads.conv, g_conv);
    g_conv.input += grad_out;
    return std::move(g_conv.input);
}

inline Matrix ddrl_backward(const DualDilatedResidualLayer& layer, const DdrlTrace& tr, const Matrix& grad_out,
                            DualDilatedResidualLayer& grads) {
    Matrix g_branch = tr.mask.empty() ? grad_out : apply_mask(grad_out, tr.mask);
    LayerGrad g_out = layer.out.backward(tr.hidden, g_branch);
    detail::accumulate(grads.out, g_out);
    LayerGrad g_merge = layer.merge.backward(tr.concat, relu_backward(tr.pre_relu, std::move(g_out.input)));
    detail::accumulate(grads.merge, g_merge);

    const std::size_t f = layer.branch1.out_channels;
    const std::size_t frames = tr.input.frames();
    Matrix g1(f, frames), g2(f, frames);
    for (std::size_t c = 0; c < f; ++c) {
        std::copy_n(g_merge.input.row(c).begin(), frames, g1.row(c).begin());
        std::copy_n(g_merge.input.row(f + c).begin(), frames, g2.row(c).begin());
    }
    LayerGrad gb1 = layer.branch1.backward(tr.input, g1);
    LayerGrad gb2 = layer.branch2.backward(tr.input, g2);
    detail::accumulate(grads.branch1, gb1);
    detail::accumulate(grads.branch2, gb2);
    gb1.input += gb2.input;
    gb1.input += grad_out;
    return std::move(gb1.input);
}

namespace detail {

inline Matrix layer_forward(const DilatedResidualLayer& l, const Matrix& x, double p, const ForwardMode& m, DrlTrace* t) {
    return drl_forward(l, x, p, m, t);
}
inline Matrix layer_forward(const DualDilatedResidualLayer& l, const Matrix& x, double p, const ForwardMode& m,
                            DdrlTrace* t) {
    return ddrl_forward(l, x, p, m, t);
}
inline Matrix layer_backward(const DilatedResidualLayer& l, const DrlTrace& t, const Matrix& g, DilatedResidualLayer& acc) {
    return drl_backward(l, t, g, acc);
}
inline Matrix layer_backward(const DualDilatedResidualLayer& l, const DdrlTrace& t, const Matrix& g,
                             DualDilatedResidualLayer& acc) {
    return ddrl_backward(l, t, g, acc);
}

template <class Layer, class LayerTrace>
Matrix stage_forward(const Stage<Layer>& stage, const Matrix& x, double p, const ForwardMode& mode,
                     StageTrace<LayerTrace>* trace) {
    Matrix h = stage.input.forward(x);
    if (trace) {
        trace->input = x;
        trace->layers.resize(stage.layers.size());
    }
    for (std::size_t i = 0; i < stage.layers.size(); ++i) {
        h = layer_forward(stage.layers[i], h, p, mode, trace ? &trace->layers[i] : nullptr);
    }
    Matrix logits = stage.head.forward(h);
    if (trace) {
        trace->final_hidden = std::move(h);
        trace->probs = softmax_over_channels(logits);
        trace->logits = std::move(logits);
        return trace->probs;
    }
    return softmax_over_channels(logits);
}

/// Returns the gradient w.r.t. the stage input.
template <class Layer, class LayerTrace>
Matrix stage_backward(const Stage<Layer>& stage, const StageTrace<LayerTrace>& tr, const Matrix& grad_logits,
                      Stage<Layer>& grads) {
    LayerGrad g_head = stage.head.backward(tr.final_hidden, grad_logits);
    accumulate(grads.head, g_head);
    Matrix g = std::move(g_head.input);
    for (std::size_t i = stage.layers.size(); i-- > 0;) {
        g = layer_backward(stage.layers[i], tr.layers[i], g, grads.layers[i]);
    }
    LayerGrad g_in = stage.input.backward(tr.input, g);
    accumulate(grads.input, g_in);
    return std::move(g_in.input);
}

inline void check_features(const Model& model, const Matrix& features) {
    if (features.frames() == 0) throw DomainError("cannot run the network on an empty sequence");
    if (features.channels() != static_cast<std::size_t>(model.config.n_features)) {
        throw ShapeError("model expects " + std::to_string(model.config.n_features) + " feature channels, got " +
                         std::to_string(features.channels()));
    }
}

}  // namespace detail

/// Forward pass recording every intermediate needed by `backward`.
inline ModelTrace forward_trace(const Model& model, const Matrix& features, const ForwardMode& mode) {
    detail::check_features(model, features);
    const double p = model.config.dropout;
    ModelTrace tr;
    Matrix probs = detail::stage_forward(model.generator, features, p, mode, &tr.generator);
    tr.refinements.resize(model.refinements.size());
    for (std::size_t s = 0; s < model.refinements.size(); ++s) {
        probs = detail::stage_forward(model.refinements[s], probs, p, mode, &tr.refinements[s]);
    }
    return tr;
}

/// Per-stage class probabilities (n_classes x T each), generator first.
inline std::vector<Matrix> forward(const Model& model, const Matrix& features, const ForwardMode& mode = {}) {
    detail::check_features(model, features);
    const double p = model.config.dropout;
    std::vector<Matrix> out;
    out.reserve(model.stage_count());
    out.push_back(detail::stage_forward<DualDilatedResidualLayer, DdrlTrace>(model.generator, features, p, mode, nullptr));
    for (const auto& stage : model.refinements) {
        out.push_back(detail::stage_forward<DilatedResidualLayer, DrlTrace>(stage, out.back(), p, mode, nullptr));
    }
    return out;
}

inline std::vector<int> predict_labels(const Model& model, const Matrix& features) {
    return argmax_over_channels(forward(model, features).back());
}

/// Backpropagate per-stage logit gradients. Each refinement stage's input
/// gradient flows through the previous stage's softmax into its logits.
inline Model backward(const Model& model, const ModelTrace& tr, std::span<const Matrix> grad_logits,
                      Matrix* grad_features = nullptr) {
    if (grad_logits.size() != model.stage_count()) throw ShapeError("backward: one logit gradient per stage required");
    Model grads = zeros_like(model);
    Matrix carry;  // dL/d(probs) of the stage before the current one
    for (std::size_t s = model.refinements.size(); s-- > 0;) {
        Matrix g = grad_logits[s + 1];
        if (!carry.empty()) g += softmax_backward(tr.refinements[s].probs, carry);
        carry = detail::stage_backward(model.refinements[s], tr.refinements[s], g, grads.refinements[s]);
    }
    Matrix g = grad_logits[0];
    if (!carry.empty()) g += softmax_backward(tr.generator.probs, carry);
    Matrix g_features = detail::stage_backward(model.generator, tr.generator, g, grads.generator);
    if (grad_features) *grad_features = std::move(g_features);
    return grads;
}

}  // namespace bftcn
