#pragma once

// Convolution and activation primitives with hand-written backward passes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bftcn/errors.hpp"
#include "bftcn/matrix.hpp"
#include "bftcn/rng.hpp"

namespace bftcn {

/// Gradients of one convolution: w.r.t. its input, its weights and its bias.
struct LayerGrad {
    Matrix input;
    std::vector<double> weight;
    std::vector<double> bias;
};

/// Kernel-size-3 dilated temporal convolution with asymmetric zero padding:
/// 2*dilation - future_pad frames before the sequence, future_pad after it.
/// Tap k of the kernel reads input frame t + (k - 2) * dilation + future_pad.
struct DilatedConv {
    static constexpr int kKernel = 3;

    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::int64_t dilation = 1;
    std::int64_t future_pad = 1;
    std::vector<double> weight;  ///< [out][in][tap]
    std::vector<double> bias;    ///< [out]

    DilatedConv() = default;

    DilatedConv(std::size_t in, std::size_t out, std::int64_t dil, std::int64_t pad)
        : in_channels(in), out_channels(out), dilation(dil), future_pad(pad),
          weight(in * out * kKernel, 0.0), bias(out, 0.0) {
        if (dil < 1) throw DomainError("dilation must be >= 1");
        if (pad < 0 || pad > dil) throw DomainError("future pad must lie in [0, dilation]");
    }

    double& w(std::size_t o, std::size_t i, int k) { return weight[(o * in_channels + i) * kKernel + static_cast<std::size_t>(k)]; }
    double w(std::size_t o, std::size_t i, int k) const { return weight[(o * in_channels + i) * kKernel + static_cast<std::size_t>(k)]; }

    std::int64_t tap_offset(int k) const { return (k - 2) * dilation + future_pad; }
    std::int64_t past_reach() const { return 2 * dilation - future_pad; }

    Matrix forward(const Matrix& x) const {
        check_input(x);
        const auto frames = static_cast<std::int64_t>(x.frames());
        Matrix out(out_channels, x.frames());
        for (std::size_t o = 0; o < out_channels; ++o) {
            auto orow = out.row(o);
            std::fill(orow.begin(), orow.end(), bias[o]);
            for (int k = 0; k < kKernel; ++k) {
                const std::int64_t off = tap_offset(k);
                const std::int64_t lo = std::max<std::int64_t>(0, -off);
                const std::int64_t hi = std::min<std::int64_t>(frames, frames - off);
                for (std::size_t i = 0; i < in_channels; ++i) {
                    const double wk = w(o, i, k);
                    const double* xrow = x.row(i).data();
                    for (std::int64_t t = lo; t < hi; ++t) orow[static_cast<std::size_t>(t)] += wk * xrow[t + off];
                }
            }
        }
        return out;
    }

    LayerGrad backward(const Matrix& x, const Matrix& grad_out) const {
        check_input(x);
        if (grad_out.channels() != out_channels || grad_out.frames() != x.frames()) {
            throw ShapeError("dilated conv backward: grad shape " + grad_out.shape_string());
        }
        const auto frames = static_cast<std::int64_t>(x.frames());
        LayerGrad g{Matrix(in_channels, x.frames()), std::vector<double>(weight.size(), 0.0),
                    std::vector<double>(out_channels, 0.0)};
        for (std::size_t o = 0; o < out_channels; ++o) {
            const auto grow = grad_out.row(o);
            double b = 0.0;
            for (double v : grow) b += v;
            g.bias[o] = b;
            for (int k = 0; k < kKernel; ++k) {
                const std::int64_t off = tap_offset(k);
                const std::int64_t lo = std::max<std::int64_t>(0, -off);
                const std::int64_t hi = std::min<std::int64_t>(frames, frames - off);
                for (std::size_t i = 0; i < in_channels; ++i) {
                    const double* xrow = x.row(i).data();
                    double* gxrow = g.input.row(i).data();
                    const double wk = w(o, i, k);
                    double acc = 0.0;
                    for (std::int64_t t = lo; t < hi; ++t) {
                        const double go = grow[static_cast<std::size_t>(t)];
                        acc += go * xrow[t + off];
                        gxrow[t + off] += wk * go;
                    }
                    g.weight[(o * in_channels + i) * kKernel + static_cast<std::size_t>(k)] = acc;
                }
            }
        }
        return g;
    }

private:
    void check_input(const Matrix& x) const {
        if (x.channels() != in_channels) {
            throw ShapeError("dilated conv expects " + std::to_string(in_channels) + " channels, got " +
                             std::to_string(x.channels()));
        }
    }
};

/// Kernel-size-1 convolution: an affine map applied to each frame independently.
struct PointwiseConv {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::vector<double> weight;  ///< [out][in]
    std::vector<double> bias;

    PointwiseConv() = default;
    PointwiseConv(std::size_t in, std::size_t out) : in_channels(in), out_channels(out), weight(in * out, 0.0), bias(out, 0.0) {}

    double& w(std::size_t o, std::size_t i) { return weight[o * in_channels + i]; }
    double w(std::size_t o, std::size_t i) const { return weight[o * in_channels + i]; }

    Matrix forward(const Matrix& x) const {
        check_input(x);
        Matrix out(out_channels, x.frames());
        for (std::size_t o = 0; o < out_channels; ++o) {
            auto orow = out.row(o);
            std::fill(orow.begin(), orow.end(), bias[o]);
            for (std::size_t i = 0; i < in_channels; ++i) {
                const double wi = w(o, i);
                const auto xrow = x.row(i);
                for (std::size_t t = 0; t < orow.size(); ++t) orow[t] += wi * xrow[t];
            }
        }
        return out;
    }

    LayerGrad backward(const Matrix& x, const Matrix& grad_out) const {
        check_input(x);
        if (grad_out.channels() != out_channels || grad_out.frames() != x.frames()) {
            throw ShapeError("pointwise conv backward: grad shape " + grad_out.shape_string());
        }
        LayerGrad g{Matrix(in_channels, x.frames()), std::vector<double>(weight.size(), 0.0),
                    std::vector<double>(out_channels, 0.0)};
        for (std::size_t o = 0; o < out_channels; ++o) {
            const auto grow = grad_out.row(o);
            double b = 0.0;
            for (double v : grow) b += v;
            g.bias[o] = b;
            for (std::size_t i = 0; i < in_channels; ++i) {
                const auto xrow = x.row(i);
                auto gxrow = g.input.row(i);
                const double wi = w(o, i);
                double acc = 0.0;
                for (std::size_t t = 0; t < grow.size(); ++t) {
                    acc += grow[t] * xrow[t];
                    gxrow[t] += wi * grow[t];
                }
                g.weight[o * in_channels + i] = acc;
            }
        }
        return g;
    }

private:
    void check_input(const Matrix& x) const {
        if (x.channels() != in_channels) {
            throw ShapeError("pointwise conv expects " + std::to_string(in_channels) + " channels, got " +
                             std::to_string(x.channels()));
        }
    }
};

/// Uniform initialization in +-1/sqrt(fan_in) for weights and biases.
inline void init_uniform(DilatedConv& conv, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(conv.in_channels * DilatedConv::kKernel));
    for (double& v : conv.weight) v = rng.uniform(-bound, bound);
    for (double& v : conv.bias) v = rng.uniform(-bound, bound);
}

inline void init_uniform(PointwiseConv& conv, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(conv.in_channels));
    for (double& v : conv.weight) v = rng.uniform(-bound, bound);
    for (double& v : conv.bias) v = rng.uniform(-bound, bound);
}

inline Matrix relu(Matrix x) {
    for (double& v : x.values()) v = std::max(v, 0.0);
    return x;
}

/// Gradient of relu given its input (pre-activation) and the upstream gradient.
inline Matrix relu_backward(const Matrix& pre, Matrix grad) {
    pre.require_same_shape(grad, "relu_backward");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (pre.values()[i] <= 0.0) grad.values()[i] = 0.0;
    }
    return grad;
}

/// Inverted-dropout scale matrix: 0 with probability p, 1/(1-p) otherwise.
inline Matrix dropout_mask(std::size_t channels, std::size_t frames, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw DomainError("dropout probability must be in [0, 1)");
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix mask(channels, frames);
    for (double& v : mask.values()) v = rng.uniform() < p ? 0.0 : keep_scale;
    return mask;
}

inline Matrix apply_mask(Matrix x, const Matrix& mask) {
    x.require_same_shape(mask, "apply_mask");
    for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] *= mask.values()[i];
    return x;
}

/// Identity unless training with p > 0. Draws from rng only when it applies a mask.
inline Matrix dropout(Matrix x, double p, Rng& rng, bool training) {
    if (!training || p == 0.0) return x;
    Matrix mask = dropout_mask(x.channels(), x.frames(), p, rng);
    return apply_mask(std::move(x), mask);
}

inline void softmax_column(std::span<double> col) {
    const double mx = *std::max_element(col.begin(), col.end());
    double sum = 0.0;
    for (double& v : col) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : col) v /= sum;
}

/// Per-frame softmax across channels.
inline Matrix softmax_over_channels(const Matrix& logits) {
    Matrix probs(logits.channels(), logits.frames());
    std::vector<double> col(logits.channels());
    for (std::size_t t = 0; t < logits.frames(); ++t) {
        for (std::size_t c = 0; c < col.size(); ++c) {
            if (!std::isfinite(logits(c, t))) throw NumericError("softmax input is not finite");
            col[c] = logits(c, t);
        }
        softmax_column(col);
        probs.set_column(t, col);
    }
    return probs;
}

/// Gradient w.r.t. logits given softmax output p and dL/dp: p * (g - <p, g>).
inline Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
    probs.require_same_shape(grad_probs, "softmax_backward");
    Matrix g(probs.channels(), probs.frames());
    for (std::size_t t = 0; t < probs.frames(); ++t) {
        double dot = 0.0;
        for (std::size_t c = 0; c < probs.channels(); ++c) dot += probs(c, t) * grad_probs(c, t);
        for (std::size_t c = 0; c < probs.channels(); ++c) g(c, t) = probs(c, t) * (grad_probs(c, t) - dot);
    }
    return g;
}

inline std::vector<int> argmax_over_channels(const Matrix& probs) {
    std::vector<int> labels(probs.frames(), 0);
    for (std::size_t t = 0; t < probs.frames(); ++t) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < probs.channels(); ++c) {
            if (probs(c, t) > best) {
                best = probs(c, t);
                labels[t] = static_cast<int>(c);
            }
        }
    }
    return labels;
}

}  // namespace bftcn
