#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bftcn/adam.hpp"
#include "bftcn/gradcheck.hpp"
#include "bftcn/loss.hpp"
#include "bftcn/synth.hpp"
#include "bftcn/train.hpp"
#include "test_helpers.hpp"

using namespace bftcn;
using testing_util::random_matrix;
using testing_util::small_config;

namespace {

Matrix uniform_probs(std::size_t classes, std::size_t frames) {
    Matrix p(classes, frames);
    for (double& v : p.values()) v = 1.0 / static_cast<double>(classes);
    return p;
}

Matrix softmax_of(const Matrix& logits) { return softmax_over_channels(logits); }

std::vector<Video> tiny_videos(std::size_t count, std::uint64_t seed, int t_min = 40, int t_max = 60) {
    std::vector<Video> out;
    for (std::size_t i = 0; i < count; ++i) {
        SynthSpec s;
        s.n_classes = 3;
        s.feature_dim = 3;
        s.t_min = t_min;
        s.t_max = t_max;
        s.stay_probability = 0.9;
        s.min_dwell = 5;
        s.sigma = 0.5;
        s.seed = seed + i;
        auto v = generate_synthetic(s);
        out.push_back({"v" + std::to_string(i), std::move(v.features), std::move(v.labels), 30.0});
    }
    return out;
}

}  // namespace

TEST(Loss, UniformCrossEntropyIsLogClassCount) {
    const std::vector<Matrix> probs{uniform_probs(6, 10)};
    const std::vector<int> labels{0, 1, 2, 3, 4, 5, 0, 1, 2, 3};
    const LossResult r = mstcn_loss(probs, labels, {});
    EXPECT_NEAR(r.stages[0].cross_entropy, std::log(6.0), 1e-12);
    EXPECT_NEAR(r.stages[0].smoothing, 0.0, 1e-15);
    EXPECT_NEAR(r.value, std::log(6.0), 1e-12);
}

TEST(Loss, SmoothingVanishesForConstantPredictions) {
    Rng rng(1);
    Matrix logits(4, 1);
    for (double& v : logits.values()) v = rng.normal();
    const Matrix col = softmax_of(logits);
    Matrix p(4, 20);
    for (std::size_t t = 0; t < 20; ++t) p.set_column(t, col.column(0));
    const std::vector<Matrix> probs{p};
    const std::vector<int> labels(20, 2);
    EXPECT_EQ(mstcn_loss(probs, labels, {}).stages[0].smoothing, 0.0);
}

TEST(Loss, TruncationCapsEachTerm) {
    EXPECT_EQ(truncated_square(100.0, 4.0), 16.0);
    EXPECT_EQ(truncated_square(-5.0, 4.0), 16.0);
    EXPECT_EQ(truncated_square(1.5, 4.0), 2.25);

    // Two frames, one class jumping from ~1 to ~1e-12: |delta log p| far exceeds tau.
    Matrix p(2, 2);
    p(0, 0) = 1.0 - 1e-12;
    p(1, 0) = 1e-12;
    p(0, 1) = 1e-12;
    p(1, 1) = 1.0 - 1e-12;
    const std::vector<Matrix> probs{p};
    const std::vector<int> labels{0, 1};
    // Each class contributes min(|~27.6|, 4)^2 = 16, normalised by (T-1)*C = 2.
    EXPECT_NEAR(mstcn_loss(probs, labels, {}).stages[0].smoothing, 16.0, 1e-9);
}

TEST(Loss, SumsOverStagesAndHonoursLambda) {
    Rng rng(2);
    const Matrix a = softmax_of(random_matrix(3, 8, rng));
    const Matrix b = softmax_of(random_matrix(3, 8, rng));
    const std::vector<int> labels{0, 0, 1, 1, 2, 2, 0, 1};
    const std::vector<Matrix> both{a, b};
    const LossResult r = mstcn_loss(both, labels, {0.25, 4.0});
    double expect = 0.0;
    for (const auto& s : r.stages) expect += s.cross_entropy + 0.25 * s.smoothing;
    EXPECT_NEAR(r.value, expect, 1e-12);
    EXPECT_NEAR(r.stages[0].cross_entropy, mstcn_loss(std::vector<Matrix>{a}, labels, {}).stages[0].cross_entropy, 0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    Rng rng(3);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t c = 3 + static_cast<std::size_t>(trial % 3), t = 9;
        const Matrix z = random_matrix(c, t, rng, 2.0);
        std::vector<int> labels(t);
        for (auto& y : labels) y = static_cast<int>(rng.index(c));
        const std::vector<Matrix> ref{softmax_of(z)};
        const LossResult r = mstcn_loss(ref, labels, {1.0, trial % 2 ? 0.5 : 4.0});
        auto f = [&](std::span<const double> v) {
            Matrix zz(c, t);
            std::copy(v.begin(), v.end(), zz.values().begin());
            const std::vector<Matrix> probs{softmax_of(zz)};
            return mstcn_loss(probs, labels, {1.0, trial % 2 ? 0.5 : 4.0}, ref).value;
        };
        EXPECT_LT(gradient_check(f, z.values(), r.grad_logits[0].values()).max_rel_error, 1e-4);
    }
}

TEST(Loss, InvariantUnderClassRelabeling) {
    Rng rng(4);
    const Matrix p = softmax_of(random_matrix(4, 12, rng));
    std::vector<int> labels(12);
    for (auto& y : labels) y = static_cast<int>(rng.index(4));
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Matrix q(4, 12);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t t = 0; t < 12; ++t) q(perm[c], t) = p(c, t);
    }
    std::vector<int> relabeled(12);
    for (std::size_t t = 0; t < 12; ++t) relabeled[t] = static_cast<int>(perm[static_cast<std::size_t>(labels[t])]);
    EXPECT_NEAR(mstcn_loss(std::vector<Matrix>{p}, labels, {}).value,
                mstcn_loss(std::vector<Matrix>{q}, relabeled, {}).value, 1e-12);
}

TEST(Loss, RejectsBadInputs) {
    const std::vector<Matrix> probs{uniform_probs(3, 4)};
    EXPECT_THROW(mstcn_loss(probs, std::vector<int>{0, 1, 3, 0}, {}), DomainError);
    EXPECT_THROW(mstcn_loss(probs, std::vector<int>{0, 1, 2}, {}), ShapeError);
    EXPECT_THROW(mstcn_loss(probs, std::vector<int>{}, {}), DomainError);
    EXPECT_THROW(mstcn_loss(probs, std::vector<int>{0, 0, 0, 0}, {1.0, 0.0}), DomainError);
    const std::vector<Matrix> single{uniform_probs(3, 1)};
    EXPECT_NEAR(mstcn_loss(single, std::vector<int>{1}, {}).value, std::log(3.0), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    OptimizerState st({}, 3);
    const std::vector<std::span<double>> ps{p};
    const std::vector<std::span<const double>> gs{g};
    for (int i = 0; i < 5; ++i) adam_step(st, ps, gs);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<double> p{0.5, 0.5};
    const std::vector<double> g{3.0, -0.01};
    OptimizerState st({}, 2);
    const std::vector<std::span<double>> ps{p};
    const std::vector<std::span<const double>> gs{g};
    adam_step(st, ps, gs);
    EXPECT_NEAR(p[0], 0.5 - 0.001, 1e-9);
    EXPECT_NEAR(p[1], 0.5 + 0.001, 1e-8);
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
    auto run = [] {
        std::vector<double> p{0.1, 0.2, 0.3};
        OptimizerState st({}, 3);
        Rng rng(5);
        for (int i = 0; i < 10; ++i) {
            std::vector<double> g{rng.normal(), rng.normal(), rng.normal()};
            adam_step(st, std::vector<std::span<double>>{p}, std::vector<std::span<const double>>{g});
        }
        return p;
    };
    EXPECT_EQ(run(), run());

    std::vector<double> p{1.0, 2.0};
    const std::vector<double> g{0.5, std::nan("")};
    OptimizerState st({}, 2);
    EXPECT_THROW(adam_step(st, std::vector<std::span<double>>{p}, std::vector<std::span<const double>>{g}), NumericError);
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(st.step, 0u);
}

TEST(Train, StepCountIsCeilOfVideosOverBatch) {
    const auto videos = tiny_videos(5, 10);
    const Model m = build_model(small_config(Variant::BF, 2, 2, 1, 1), 1);
    for (int batch : {1, 2, 3, 5, 7}) {
        TrainOptions o;
        o.epochs = 2;
        o.batch_size = batch;
        const TrainResult r = train(m, videos, {}, o);
        EXPECT_EQ(r.steps, static_cast<std::uint64_t>(2 * ((5 + batch - 1) / batch)));
        EXPECT_EQ(r.history.size(), 2u);
    }
}

TEST(Train, LossDecreasesOnTinyProblem) {
    const auto videos = tiny_videos(2, 20);
    Model m = build_model(small_config(Variant::BF, 3, 3, 1, 1, 8), 2);
    Rng rng(3);
    OptimizerState st({0.01, 0.9, 0.999, 1e-8}, parameter_count(m));
    auto total_loss = [&] {
        double s = 0.0;
        for (const auto& v : videos) s += mstcn_loss(forward(m, v.features), v.labels, {}).value;
        return s;
    };
    const double before = total_loss();
    for (int step = 0; step < 20; ++step) {
        Model acc = zeros_like(m);
        for (const auto& v : videos) axpy(acc, video_gradient(m, v, {}, rng).second, 0.5);
        adam_step(st, m, acc);
    }
    EXPECT_LT(total_loss(), before);
}

TEST(Train, BestEpochIsArgmaxOfValidationF1) {
    const auto train_set = tiny_videos(3, 30);
    const auto val_set = tiny_videos(2, 40);
    TrainOptions o;
    o.epochs = 6;
    o.adam.learning_rate = 0.01;
    int callbacks = 0;
    o.on_epoch = [&](const EpochRecord&) { ++callbacks; };
    const Model m = build_model(small_config(Variant::BF, 3, 3, 1, 1, 8), 3);
    const TrainResult r = train(m, train_set, val_set, o);
    ASSERT_EQ(r.history.size(), 6u);
    EXPECT_EQ(callbacks, 6);
    double best = -1.0;
    int best_epoch = 0;
    for (const auto& e : r.history) {
        if (e.validation.f1_at.at(50) > best) {
            best = e.validation.f1_at.at(50);
            best_epoch = e.epoch;
        }
    }
    EXPECT_EQ(r.best_epoch, best_epoch);
    EXPECT_NEAR(evaluate(r.best, val_set).mean.f1_at.at(50), best, 1e-9);
}

TEST(Train, BitReproducibleForFixedSeed) {
    const auto videos = tiny_videos(3, 50);
    TrainOptions o;
    o.epochs = 3;
    o.seed = 9;
    const Model m = build_model(small_config(Variant::RR, 2, 2, 1, 0), 4);
    const TrainResult a = train(m, videos, {}, o);
    const TrainResult b = train(m, videos, {}, o);
    EXPECT_EQ(testing_util::flatten(a.best), testing_util::flatten(b.best));
    EXPECT_EQ(history_to_json(a).dump(), history_to_json(b).dump());
    o.seed = 10;
    EXPECT_NE(testing_util::flatten(train(m, videos, {}, o).best), testing_util::flatten(a.best));
}

TEST(Train, RejectsInvalidSetup) {
    const auto videos = tiny_videos(1, 60);
    const Model m = build_model(small_config(Variant::RR, 2, 2, 1, 0), 4);
    TrainOptions o;
    o.epochs = 1;
    EXPECT_THROW(train(m, {}, {}, o), DomainError);
    o.batch_size = 0;
    EXPECT_THROW(train(m, videos, {}, o), DomainError);
    const Model wide = build_model(small_config(Variant::RR, 2, 2, 1, 0, 4, 3, 5), 4);
    o.batch_size = 1;
    EXPECT_THROW(train(wide, videos, {}, o), ShapeError);
    EXPECT_THROW(evaluate(m, {}), DomainError);
}
