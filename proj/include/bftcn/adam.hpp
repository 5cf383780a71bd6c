#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bftcn/errors.hpp"
#include "bftcn/model.hpp"

namespace bftcn {

struct AdamOptions {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam moments over a flat parameter vector (all tensors concatenated in order).
struct OptimizerState {
    AdamOptions options;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    OptimizerState() = default;
    OptimizerState(AdamOptions opts, std::size_t n_params)
        : options(opts), first_moment(n_params, 0.0), second_moment(n_params, 0.0) {}
};

/// One bias-corrected Adam update over a list of parameter tensors and their gradients.
/// Gradients are validated before anything is modified.
inline void adam_step(OptimizerState& state, std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient tensor counts differ");
    std::size_t total = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size()) throw ShapeError("adam: tensor " + std::to_string(k) + " size mismatch");
        for (double g : grads[k]) {
            if (!std::isfinite(g)) {
                throw NumericError("adam: non-finite gradient in tensor " + std::to_string(k) + " at step " +
                                   std::to_string(state.step + 1));
            }
        }
        total += params[k].size();
    }
    if (total != state.first_moment.size()) throw ShapeError("adam: state sized for a different parameter count");

    const AdamOptions& o = state.options;
    ++state.step;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
    std::size_t idx = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].size(); ++i, ++idx) {
            const double g = grads[k][i];
            double& m = state.first_moment[idx];
            double& v = state.second_moment[idx];
            m = o.beta1 * m + (1.0 - o.beta1) * g;
            v = o.beta2 * v + (1.0 - o.beta2) * g * g;
            params[k][i] -= o.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + o.epsilon);
        }
    }
}

inline void adam_step(OptimizerState& state, Model& params, const Model& grads) {
    const auto p = tensors(params);
    const auto g = tensors(grads);
    adam_step(state, p, g);
}

}  // namespace bftcn
