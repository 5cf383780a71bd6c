#pragma once

// Empirical future-window measurement: how far ahead of frame t does an input
// perturbation still move the final-stage output at t?
//
// Perturbations are infinitesimal. One reverse pass from the output column at
// t gives its sensitivity to every input frame at once. A finite perturbation
// is not usable in deep stacks: the farthest frame's influence shrinks by
// about an order of magnitude per layer and is lost to rounding once it is
// added onto the O(1) residual stream. Frames outside the window have an
// exactly zero sensitivity, since no path of nonzero taps connects them.

#include <algorithm>
#include <cstdint>

#include "bftcn/errors.hpp"
#include "bftcn/model.hpp"
#include "bftcn/rng.hpp"

namespace bftcn {

/// Largest offset d in [0, horizon] such that input frame t + d influences the
/// final-stage output at frame t (0 if none does). Throws
/// InconclusiveMeasurement when frame t + horizon itself has influence: the
/// true window may then extend past the horizon.
inline std::int64_t measure_future_window(const Model& model, std::int64_t t, std::int64_t horizon,
                                          std::uint64_t input_seed = 0) {
    if (t < 0) throw DomainError("probe frame must be non-negative");
    if (horizon < 1) throw DomainError("probe horizon must be at least 1 frame");
    const auto length = static_cast<std::size_t>(t + horizon + 1);
    const auto channels = static_cast<std::size_t>(model.config.n_features);
    const auto classes = static_cast<std::size_t>(model.config.n_classes);
    Rng rng(input_seed);
    Matrix x(channels, length);
    for (double& v : x.values()) v = rng.normal();

    const ModelTrace tr = forward_trace(model, x, {});
    const auto probs = tr.probs();
    std::vector<Matrix> grad_logits;
    for (const auto& p : probs) grad_logits.emplace_back(p.channels(), p.frames());
    // Random readout of the output column so no class direction is singled out.
    Matrix readout(classes, length);
    for (std::size_t c = 0; c < classes; ++c) readout(c, static_cast<std::size_t>(t)) = 1.0 + rng.uniform();
    grad_logits.back() = softmax_backward(probs.back(), readout);
    Matrix sensitivity;
    backward(model, tr, grad_logits, &sensitivity);

    for (std::int64_t d = horizon; d >= 1; --d) {
        const auto col = sensitivity.column(static_cast<std::size_t>(t + d));
        if (std::any_of(col.begin(), col.end(), [](double v) { return v != 0.0; })) {
            if (d == horizon) {
                throw InconclusiveMeasurement("output at frame " + std::to_string(t) + " still depends on frame t+" +
                                              std::to_string(horizon) + "; increase the horizon");
            }
            return d;
        }
    }
    return 0;
}

}  // namespace bftcn
