#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bftcn/gradcheck.hpp"
#include "bftcn/layers.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace bftcn;
using testing_util::dot;
using testing_util::random_matrix;

namespace {

DilatedConv single_channel(std::int64_t dilation, std::int64_t pad, std::vector<double> kernel, double bias = 0.0) {
    DilatedConv c(1, 1, dilation, pad);
    c.weight = std::move(kernel);
    c.bias = {bias};
    return c;
}

Matrix row_vector(std::vector<double> v) { return Matrix::from_rows({std::move(v)}); }

std::vector<double> as_vector(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

DilatedConv random_conv(std::size_t in, std::size_t out, std::int64_t dil, std::int64_t pad, Rng& rng) {
    DilatedConv c(in, out, dil, pad);
    for (double& v : c.weight) v = rng.normal();
    for (double& v : c.bias) v = rng.normal();
    return c;
}

}  // namespace

TEST(DilatedConv, SymmetricHandExample) {
    const auto y = single_channel(1, 1, {1, 1, 1}).forward(row_vector({1, 2, 3, 4}));
    EXPECT_EQ(as_vector(y), (std::vector<double>{3, 6, 9, 7}));
}

TEST(DilatedConv, CausalHandExample) {
    const auto y = single_channel(1, 0, {1, 1, 1}).forward(row_vector({1, 2, 3, 4}));
    EXPECT_EQ(as_vector(y), (std::vector<double>{1, 3, 6, 9}));
}

TEST(DilatedConv, CenterTapIsIdentityWhenSymmetric) {
    Rng rng(1);
    for (std::int64_t d : {1, 2, 4, 8}) {
        const Matrix x = random_matrix(1, 13, rng);
        EXPECT_EQ(single_channel(d, d, {0, 1, 0}).forward(x), x);
    }
}

TEST(DilatedConv, AgreesWithExplicitPaddingOracle) {
    Rng rng(2);
    for (std::int64_t d : {1, 2, 3, 8}) {
        for (std::int64_t m = 0; m <= d; ++m) {
            const std::vector<double> k{rng.normal(), rng.normal(), rng.normal()};
            const double b = rng.normal();
            const Matrix x = random_matrix(1, 11, rng);
            const auto got = as_vector(single_channel(d, m, k, b).forward(x));
            const auto want = oracle::conv1d_padded(as_vector(x), k, d, m, b);
            for (std::size_t t = 0; t < got.size(); ++t) EXPECT_NEAR(got[t], want[t], 1e-12);
        }
    }
}

TEST(DilatedConv, RejectsBadPaddingAndChannelMismatch) {
    EXPECT_THROW(DilatedConv(1, 1, 2, 3), DomainError);
    EXPECT_THROW(DilatedConv(1, 1, 2, -1), DomainError);
    EXPECT_THROW(DilatedConv(2, 1, 1, 1).forward(Matrix(3, 4)), ShapeError);
    EXPECT_THROW(DilatedConv(2, 1, 1, 1).backward(Matrix(2, 4), Matrix(1, 5)), ShapeError);
}

TEST(DilatedConv, FutureBeyondPadNeverLeaks) {
    Rng rng(3);
    for (std::int64_t d : {1, 2, 4}) {
        for (std::int64_t m = 0; m <= d; ++m) {
            const DilatedConv conv = random_conv(2, 3, d, m, rng);
            const Matrix x = random_matrix(2, 20, rng);
            const Matrix y = conv.forward(x);
            EXPECT_EQ(y.frames(), x.frames());
            for (std::size_t t = 0; t < 20; ++t) {
                for (std::size_t later = t + static_cast<std::size_t>(m) + 1; later < 20; ++later) {
                    Matrix xp = x;
                    xp(0, later) += 5.0;
                    xp(1, later) -= 3.0;
                    ASSERT_EQ(conv.forward(xp).column(t), y.column(t));
                }
            }
        }
    }
}

TEST(DilatedConv, BackwardZeroGradient) {
    Rng rng(4);
    const DilatedConv conv = random_conv(2, 2, 2, 1, rng);
    const LayerGrad g = conv.backward(random_matrix(2, 6, rng), Matrix(2, 6));
    for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
    for (double v : g.weight) EXPECT_EQ(v, 0.0);
    for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(DilatedConv, BackwardSingleFrameOnlyCenterTap) {
    const DilatedConv conv = single_channel(1, 1, {0.5, -2.0, 3.0});
    const LayerGrad g = conv.backward(row_vector({1.5}), row_vector({2.0}));
    // With m = 1 the taps read frames -1, 0, +1; only the middle tap sees data.
    EXPECT_EQ(g.weight, (std::vector<double>{0.0, 3.0, 0.0}));
    EXPECT_EQ(g.bias, (std::vector<double>{2.0}));
    EXPECT_EQ(as_vector(g.input), (std::vector<double>{-4.0}));
}

TEST(DilatedConv, BackwardMatchesFiniteDifferences) {
    Rng rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        const std::int64_t d = 1 + trial % 3;
        const std::int64_t m = trial % static_cast<int>(d + 1);
        const DilatedConv conv = random_conv(3, 2, d, m, rng);
        const Matrix x = random_matrix(3, 9, rng);
        const Matrix gout = random_matrix(2, 9, rng);
        const LayerGrad g = conv.backward(x, gout);

        auto f_x = [&](std::span<const double> v) {
            Matrix xx(3, 9);
            std::copy(v.begin(), v.end(), xx.values().begin());
            return dot(conv.forward(xx), gout);
        };
        EXPECT_LT(gradient_check(f_x, x.values(), g.input.values()).max_rel_error, 1e-6);

        std::vector<double> params = conv.weight;
        params.insert(params.end(), conv.bias.begin(), conv.bias.end());
        std::vector<double> analytic = g.weight;
        analytic.insert(analytic.end(), g.bias.begin(), g.bias.end());
        auto f_w = [&](std::span<const double> v) {
            DilatedConv c = conv;
            std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(c.weight.size()), c.weight.begin());
            std::copy(v.begin() + static_cast<std::ptrdiff_t>(c.weight.size()), v.end(), c.bias.begin());
            return dot(c.forward(x), gout);
        };
        EXPECT_LT(gradient_check(f_w, params, analytic).max_rel_error, 1e-6);
    }
}

TEST(PointwiseConv, IdentityAndHandExample) {
    Rng rng(6);
    PointwiseConv id(3, 3);
    for (std::size_t i = 0; i < 3; ++i) id.w(i, i) = 1.0;
    const Matrix x = random_matrix(3, 5, rng);
    EXPECT_EQ(id.forward(x), x);

    PointwiseConv sum(2, 1);
    sum.weight = {1.0, 1.0};
    const Matrix y = sum.forward(Matrix::from_rows({{1, 2}, {3, 4}}));
    EXPECT_EQ(as_vector(y), (std::vector<double>{4, 6}));
}

TEST(PointwiseConv, NoTemporalMixing) {
    Rng rng(7);
    PointwiseConv pw(2, 3);
    for (double& v : pw.weight) v = rng.normal();
    const Matrix x = random_matrix(2, 8, rng);
    const Matrix y = pw.forward(x);
    Matrix xp = x;
    xp(1, 4) += 1.0;
    const Matrix yp = pw.forward(xp);
    for (std::size_t t = 0; t < 8; ++t) {
        if (t != 4) {
            EXPECT_EQ(yp.column(t), y.column(t));
        }
    }
    EXPECT_NE(yp.column(4), y.column(4));
}

TEST(PointwiseConv, BackwardMatchesFiniteDifferences) {
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        PointwiseConv pw(4, 3);
        for (double& v : pw.weight) v = rng.normal();
        for (double& v : pw.bias) v = rng.normal();
        const Matrix x = random_matrix(4, 7, rng);
        const Matrix gout = random_matrix(3, 7, rng);
        const LayerGrad g = pw.backward(x, gout);
        auto f_x = [&](std::span<const double> v) {
            Matrix xx(4, 7);
            std::copy(v.begin(), v.end(), xx.values().begin());
            return dot(pw.forward(xx), gout);
        };
        EXPECT_LT(gradient_check(f_x, x.values(), g.input.values()).max_rel_error, 1e-6);
        auto f_w = [&](std::span<const double> v) {
            PointwiseConv c = pw;
            std::copy(v.begin(), v.end(), c.weight.begin());
            return dot(c.forward(x), gout);
        };
        EXPECT_LT(gradient_check(f_w, pw.weight, g.weight).max_rel_error, 1e-6);
        double bias_sum = 0.0;
        for (double v : gout.row(0)) bias_sum += v;
        EXPECT_NEAR(g.bias[0], bias_sum, 1e-12);
    }
}

TEST(Activations, Relu) {
    EXPECT_EQ(as_vector(relu(row_vector({-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
    const Matrix g = relu_backward(row_vector({-1, 0, 2}), row_vector({5, 5, 5}));
    EXPECT_EQ(as_vector(g), (std::vector<double>{0, 0, 5}));
}

TEST(Activations, DropoutIdentityCases) {
    Rng rng(9);
    const Matrix x = random_matrix(3, 10, rng);
    Rng r2(1);
    EXPECT_EQ(dropout(x, 0.5, r2, false), x);
    EXPECT_EQ(dropout(x, 0.0, r2, true), x);
    EXPECT_THROW(dropout(x, 1.0, r2, true), DomainError);
}

TEST(Activations, DropoutStatistics) {
    Rng rng(10);
    const Matrix ones(50, 400, 1.0);
    const Matrix y = dropout(ones, 0.5, rng, true);
    std::size_t zeros = 0;
    for (double v : y.values()) {
        EXPECT_TRUE(v == 0.0 || v == 2.0);
        zeros += v == 0.0 ? 1 : 0;
    }
    EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(y.size()), 0.5, 0.02);
}

TEST(Activations, SoftmaxUniformAndNormalised) {
    const Matrix p = softmax_over_channels(Matrix(6, 3));
    for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-15);

    Rng rng(11);
    const Matrix q = softmax_over_channels(random_matrix(5, 40, rng, 30.0));
    for (std::size_t t = 0; t < q.frames(); ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < q.channels(); ++c) {
            EXPECT_GE(q(c, t), 0.0);
            s += q(c, t);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Activations, SoftmaxBackwardMatchesFiniteDifferences) {
    Rng rng(12);
    const Matrix z = random_matrix(4, 5, rng);
    const Matrix gp = random_matrix(4, 5, rng);
    const Matrix g = softmax_backward(softmax_over_channels(z), gp);
    auto f = [&](std::span<const double> v) {
        Matrix zz(4, 5);
        std::copy(v.begin(), v.end(), zz.values().begin());
        return dot(softmax_over_channels(zz), gp);
    };
    EXPECT_LT(gradient_check(f, z.values(), g.values()).max_rel_error, 1e-6);
}

TEST(GradientCheck, LinearFunctionIsNearlyExact) {
    const std::vector<double> a{1.5, -2.0, 0.25, 3.0};
    auto f = [&](std::span<const double> x) { return std::inner_product(a.begin(), a.end(), x.begin(), 0.0); };
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
    const auto r = gradient_check(f, x, a);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradientCheck, DetectsWrongGradientAndNonFinite) {
    auto f = [](std::span<const double> x) { return x[0] * x[0]; };
    const std::vector<double> x{1.0};
    EXPECT_FALSE(gradient_check(f, x, std::vector<double>{1.0}).passed);
    auto bad = [](std::span<const double>) { return std::nan(""); };
    EXPECT_THROW(gradient_check(bad, x, std::vector<double>{1.0}), NumericError);
}
