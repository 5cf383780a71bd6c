#pragma once

// Multi-stage segmentation loss: per stage, frame-wise cross entropy plus a
// truncated mean-squared smoothing term over adjacent-frame log-probabilities.
// The previous frame's log-probability is treated as a constant when
// differentiating the smoothing term.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "bftcn/errors.hpp"
#include "bftcn/matrix.hpp"

namespace bftcn {

struct LossConfig {
    double lambda = 1.0;  ///< smoothing weight
    double tau = 4.0;     ///< truncation threshold on |delta log p|; tau^2 = 16

    void validate() const {
        if (!(lambda >= 0.0)) throw DomainError("loss lambda must be >= 0");
        if (!(tau > 0.0)) throw DomainError("loss tau must be > 0");
    }
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Contribution of one adjacent-frame log-probability difference: min(|delta|, tau)^2.
inline double truncated_square(double delta, double tau) {
    const double d = std::min(std::abs(delta), tau);
    return d * d;
}

struct StageLoss {
    double cross_entropy = 0.0;
    double smoothing = 0.0;
};

struct LossResult {
    double value = 0.0;
    std::vector<StageLoss> stages;
    std::vector<Matrix> grad_logits;  ///< dL/dlogits, one per stage
};

/// `previous_reference`, when given, supplies the log-probabilities used for
/// the detached previous-frame terms (one matrix per stage). Without it the
/// stage's own log-probabilities are used, which is the training behaviour.
/// Passing a frozen reference turns the loss into a function whose exact
/// gradient is the one returned here.
inline LossResult mstcn_loss(std::span<const Matrix> stage_probs, std::span<const int> labels, const LossConfig& lc,
                             std::span<const Matrix> previous_reference = {}) {
    lc.validate();
    if (stage_probs.empty()) throw ShapeError("loss needs at least one stage");
    if (!previous_reference.empty() && previous_reference.size() != stage_probs.size()) {
        throw ShapeError("previous_reference must have one matrix per stage");
    }
    const std::size_t frames = labels.size();
    if (frames == 0) throw DomainError("loss over an empty sequence");
    const std::size_t classes = stage_probs.front().channels();
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
        }
    }

    LossResult result;
    for (std::size_t s = 0; s < stage_probs.size(); ++s) {
        const Matrix& p = stage_probs[s];
        if (p.channels() != classes || p.frames() != frames) {
            throw ShapeError("stage " + std::to_string(s) + " probabilities have shape " + p.shape_string());
        }
        // Clamped log-probabilities; clamped entries carry no gradient.
        Matrix logp(classes, frames);
        Matrix live(classes, frames);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double v = p.values()[i];
            if (!std::isfinite(v)) throw NumericError("non-finite probability in stage " + std::to_string(s));
            logp.values()[i] = std::log(std::max(v, kProbabilityFloor));
            live.values()[i] = v > kProbabilityFloor ? 1.0 : 0.0;
        }
        Matrix frozen;
        if (!previous_reference.empty()) {
            const Matrix& ref = previous_reference[s];
            if (ref.channels() != classes || ref.frames() != frames) throw ShapeError("reference shape mismatch");
            frozen = Matrix(classes, frames);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                frozen.values()[i] = std::log(std::max(ref.values()[i], kProbabilityFloor));
            }
        }
        const Matrix& prev = previous_reference.empty() ? logp : frozen;

        StageLoss sl;
        Matrix g_logp(classes, frames);
        const double inv_t = 1.0 / static_cast<double>(frames);
        for (std::size_t t = 0; t < frames; ++t) {
            const auto y = static_cast<std::size_t>(labels[t]);
            sl.cross_entropy -= logp(y, t) * inv_t;
            g_logp(y, t) -= inv_t;
        }
        if (frames > 1) {
            const double norm = 1.0 / (static_cast<double>(frames - 1) * static_cast<double>(classes));
            for (std::size_t c = 0; c < classes; ++c) {
                for (std::size_t t = 1; t < frames; ++t) {
                    const double delta = logp(c, t) - prev(c, t - 1);
                    sl.smoothing += truncated_square(delta, lc.tau) * norm;
                    if (std::abs(delta) < lc.tau) g_logp(c, t) += lc.lambda * 2.0 * delta * norm;
                }
            }
        }

        // Chain through log-softmax: dL/dz_c = g_c - p_c * sum_j g_j.
        Matrix g_logits(classes, frames);
        for (std::size_t t = 0; t < frames; ++t) {
            double total = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                g_logp(c, t) *= live(c, t);
                total += g_logp(c, t);
            }
            for (std::size_t c = 0; c < classes; ++c) g_logits(c, t) = g_logp(c, t) - p(c, t) * total;
        }

        result.value += sl.cross_entropy + lc.lambda * sl.smoothing;
        result.stages.push_back(sl);
        result.grad_logits.push_back(std::move(g_logits));
    }
    return result;
}

}  // namespace bftcn
