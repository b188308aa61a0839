#include <gtest/gtest.h>

#include <cmath>

#include "deepclass/errors.hpp"
#include "deepclass/gradcheck.hpp"
#include "deepclass/ops.hpp"
#include "deepclass/parallel.hpp"
#include "oracles.hpp"

using namespace deepclass;
using deepclass::testing::max_abs_diff;
using deepclass::testing::naive_conv2d;
using deepclass::testing::naive_maxpool2d;
using deepclass::testing::random_tensor;

TEST(Tensor, RejectsBadShapes) {
    EXPECT_THROW(Tensor(Shape{}), DimensionError);
    EXPECT_THROW(Tensor(Shape{1, 2, 3, 4, 5}), DimensionError);
    EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<float>(3)), DimensionError);
}

TEST(Tensor, ReshapeKeepsDataAndChecksSize) {
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = t.reshaped({3, 2});
    EXPECT_EQ(r.dim(0), 3u);
    EXPECT_EQ(r[5], 6.0f);
    EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
    EXPECT_THROW(t.dim(2), DimensionError);
}

TEST(Tensor, EqualityIsBitExact) {
    Tensor a({2}, 0.0f), b({2}, -0.0f);
    EXPECT_FALSE(a == b);
    EXPECT_TRUE(a == Tensor({2}));
}

TEST(Conv2d, KnownSmallCase) {
    // 1x1x3x3 input, 1x1x2x2 kernel of ones, stride 1, no padding: sums of 2x2 windows.
    Tensor x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k({1, 1, 2, 2}, 1.0f);
    Tensor b = Tensor::from({1}, {0.5f});
    Tensor y = conv2d(x, k, b, 1, 0);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(y[0], 12.5f);
    EXPECT_EQ(y[1], 16.5f);
    EXPECT_EQ(y[2], 24.5f);
    EXPECT_EQ(y[3], 28.5f);
}

TEST(Conv2d, IsCrossCorrelationNotConvolution) {
    Tensor x = Tensor::from({1, 1, 1, 3}, {1, 2, 3});
    Tensor k = Tensor::from({1, 1, 1, 3}, {1, 0, 0});
    EXPECT_EQ(conv2d(x, k, Tensor({1}), 1, 0)[0], 1.0f);
}

TEST(Conv2d, ZeroPaddingAndStride) {
    Tensor x({1, 1, 4, 4}, 1.0f);
    Tensor k({1, 1, 3, 3}, 1.0f);
    Tensor y = conv2d(x, k, Tensor({1}), 2, 1);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(y[0], 4.0f);  // corner window overlaps 2x2 real pixels
    EXPECT_EQ(y[3], 9.0f);
}

TEST(Conv2d, GeometryAndShapeErrors) {
    Tensor x({1, 2, 2, 2});
    EXPECT_THROW(conv2d(x, Tensor({1, 2, 3, 3}), Tensor({1}), 1, 0), GeometryError);
    EXPECT_THROW(conv2d(x, Tensor({1, 3, 1, 1}), Tensor({1}), 1, 0), DimensionError);
    EXPECT_THROW(conv2d(x, Tensor({1, 2, 1, 1}), Tensor({2}), 1, 0), DimensionError);
    EXPECT_THROW(conv2d(x, Tensor({1, 2, 1, 1}), Tensor({1}), 0, 0), GeometryError);
    EXPECT_EQ(conv_output_extent(2, 3, 1, 0), 0u);
    EXPECT_EQ(conv_output_extent(128, 3, 1, 1), 128u);
}

TEST(Conv2d, MatchesNaiveOracleOnLargerShapes) {
    Rng rng(7, "test/conv-large");
    Tensor x = random_tensor(rng, {2, 5, 19, 17});
    Tensor k = random_tensor(rng, {9, 5, 3, 3});
    Tensor b = random_tensor(rng, {9});
    for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u}) EXPECT_LE(max_abs_diff(conv2d(x, k, b, stride, pad), naive_conv2d(x, k, b, stride, pad)), 1e-5);
}

TEST(Conv2d, DeterministicAcrossWorkerCounts) {
    Rng rng(3, "test/conv-threads");
    Tensor x = random_tensor(rng, {2, 8, 32, 32});
    Tensor k = random_tensor(rng, {16, 8, 3, 3});
    Tensor b = random_tensor(rng, {16});
    Tensor g = random_tensor(rng, {2, 16, 32, 32});
    const std::size_t saved = worker_count();
    set_worker_count(1);
    Tensor y1 = conv2d(x, k, b, 1, 1);
    ConvGrads g1 = conv2d_grad(x, k, 1, 1, g);
    set_worker_count(4);
    Tensor y4 = conv2d(x, k, b, 1, 1);
    ConvGrads g4 = conv2d_grad(x, k, 1, 1, g);
    set_worker_count(saved);
    EXPECT_TRUE(y1 == y4);
    EXPECT_TRUE(g1.kernel == g4.kernel);
    EXPECT_TRUE(g1.input == g4.input);
    EXPECT_TRUE(g1.bias == g4.bias);
}

TEST(Conv2dGrad, BiasGradientSumsUpstream) {
    Tensor x({2, 1, 3, 3}, 1.0f);
    Tensor k({2, 1, 3, 3});
    Tensor g({2, 2, 1, 1});
    g[0] = 1;
    g[1] = 2;
    g[2] = 3;
    g[3] = 4;
    ConvGrads grads = conv2d_grad(x, k, 1, 0, g, false);
    EXPECT_TRUE(grads.input.empty());
    EXPECT_FLOAT_EQ(grads.bias[0], 4.0f);
    EXPECT_FLOAT_EQ(grads.bias[1], 6.0f);
    EXPECT_FLOAT_EQ(grads.kernel[0], 4.0f);  // all inputs are 1: dK = sum of upstream for that channel
}

TEST(MaxPool, ForwardAndTieBreak) {
    Tensor x = Tensor::from({1, 1, 2, 4}, {1, 3, 5, 5, 3, 2, 5, 1});
    PoolResult r = maxpool2d(x, PoolParams{2, 2});
    ASSERT_EQ(r.output.shape(), (Shape{1, 1, 1, 2}));
    EXPECT_EQ(r.output[0], 3.0f);
    EXPECT_EQ(r.output[1], 5.0f);
    EXPECT_EQ(r.argmax[0], 1u);  // 3 appears at flat 1 and 4; first occurrence wins
    EXPECT_EQ(r.argmax[1], 2u);
}

TEST(MaxPool, GradientRoutesToWinner) {
    Tensor x = Tensor::from({1, 1, 2, 2}, {0, 4, 1, 2});
    PoolResult r = maxpool2d(x, PoolParams{2, 2});
    Tensor g = Tensor::from({1, 1, 1, 1}, {2.5f});
    Tensor dx = maxpool2d_grad(r.argmax, g, x.shape());
    EXPECT_EQ(dx[1], 2.5f);
    EXPECT_EQ(dx[0] + dx[2] + dx[3], 0.0f);
}

TEST(MaxPool, OverlappingWindowsAccumulate) {
    Tensor x2 = Tensor::from({1, 1, 2, 3}, {0, 9, 0, 0, 0, 0});
    PoolResult r = maxpool2d(x2, PoolParams{2, 1});
    Tensor dx = maxpool2d_grad(r.argmax, Tensor({1, 1, 1, 2}, 1.0f), x2.shape());
    EXPECT_EQ(dx[1], 2.0f);
}

TEST(MaxPool, Errors) {
    EXPECT_THROW(maxpool2d(Tensor({1, 1, 1, 1}), PoolParams{2, 2}), GeometryError);
    EXPECT_THROW(maxpool2d(Tensor({1, 1, 4, 4}), PoolParams{0, 2}), GeometryError);
    PoolResult r = maxpool2d(Tensor({1, 1, 4, 4}), PoolParams{});
    EXPECT_THROW(maxpool2d_grad(r.argmax, Tensor({1, 1, 3, 2}), Shape{1, 1, 4, 4}), DimensionError);
}

TEST(Relu, ForwardAndSubgradientAtZero) {
    Tensor x = Tensor::from({4}, {-1, 0, 2, -0.0f});
    Tensor y = relu(x);
    EXPECT_EQ(y[0], 0.0f);
    EXPECT_EQ(y[2], 2.0f);
    Tensor g = relu_grad(x, Tensor({4}, 1.0f));
    EXPECT_EQ(g[0], 0.0f);
    EXPECT_EQ(g[1], 0.0f);
    EXPECT_EQ(g[2], 1.0f);
    EXPECT_THROW(relu_grad(x, Tensor({3})), DimensionError);
}

TEST(Dense, Forward) {
    Tensor x = Tensor::from({1, 2}, {1, 2});
    Tensor w = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor b = Tensor::from({3}, {0, 0, 10});
    Tensor y = dense(x, w, b);
    EXPECT_EQ(y[0], 1.0f);
    EXPECT_EQ(y[1], 2.0f);
    EXPECT_EQ(y[2], 13.0f);
    EXPECT_THROW(dense(x, Tensor({3, 3}), b), DimensionError);
    EXPECT_THROW(dense(x, w, Tensor({2})), DimensionError);
}

TEST(Dense, GradientsAgainstHandComputation) {
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::from({1, 2}, {0.5f, -1});
    Tensor g = Tensor::from({2, 1}, {1, 2});
    DenseGrads d = dense_grad(x, w, g);
    EXPECT_FLOAT_EQ(d.weight[0], 7.0f);   // 1*1 + 2*3
    EXPECT_FLOAT_EQ(d.weight[1], 10.0f);  // 1*2 + 2*4
    EXPECT_FLOAT_EQ(d.bias[0], 3.0f);
    EXPECT_FLOAT_EQ(d.input[2], 1.0f);
    EXPECT_FLOAT_EQ(d.input[3], -2.0f);
}

TEST(SoftmaxXent, UniformLogits) {
    Tensor z({2, 7});
    Tensor t({2, 7});
    t[0] = 1;
    t[7 + 3] = 1;
    SoftmaxXent s = softmax_xent(z, t);
    EXPECT_NEAR(s.loss, std::log(7.0), 1e-6);
    EXPECT_NEAR(s.probs[4], 1.0 / 7.0, 1e-6);
    EXPECT_NEAR(s.d_logits[0], (1.0 / 7.0 - 1.0) / 2.0, 1e-6);
    EXPECT_NEAR(s.d_logits[1], (1.0 / 7.0) / 2.0, 1e-6);
}

TEST(SoftmaxXent, StableForLargeLogits) {
    Tensor z = Tensor::from({1, 3}, {1000, 0, -1000});
    Tensor t = Tensor::from({1, 3}, {1, 0, 0});
    SoftmaxXent s = softmax_xent(z, t);
    EXPECT_TRUE(std::isfinite(s.loss));
    EXPECT_NEAR(s.loss, 0.0, 1e-9);
    EXPECT_TRUE(softmax(z).all_finite());
}

TEST(SoftmaxXent, RejectsNonOneHotTargets) {
    Tensor z({1, 3});
    EXPECT_THROW(softmax_xent(z, Tensor::from({1, 3}, {1, 1, 0})), ValidationError);
    EXPECT_THROW(softmax_xent(z, Tensor::from({1, 3}, {0.5f, 0.5f, 0})), ValidationError);
    EXPECT_THROW(softmax_xent(z, Tensor({1, 3})), ValidationError);
    EXPECT_THROW(softmax_xent(z, Tensor({1, 4})), DimensionError);
}

TEST(OracleGrid, Conv2dMatchesNaive) {
    Rng rng(11, "test/grid-conv");
    auto r = deepclass::testing::sweep_small_grid(
        [&](std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t s, std::size_t p) {
            if (conv_output_extent(H, k, s, p) == 0 || conv_output_extent(W, k, s, p) == 0) return -1.0;
            const std::size_t O = 1 + (B + C + H) % 3;
            Tensor x = random_tensor(rng, {B, C, H, W});
            Tensor kr = random_tensor(rng, {O, C, k, k});
            Tensor b = random_tensor(rng, {O});
            return max_abs_diff(conv2d(x, kr, b, s, p), naive_conv2d(x, kr, b, s, p));
        });
    EXPECT_GT(r.cases, 3000u);
    EXPECT_LE(r.worst, 1e-5);
}

TEST(OracleGrid, MaxPoolMatchesNaive) {
    Rng rng(12, "test/grid-pool");
    auto r = deepclass::testing::sweep_small_grid(
        [&](std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t k, std::size_t s, std::size_t p) {
            if (p != 0 || k > H || k > W) return -1.0;
            Tensor x = random_tensor(rng, {B, C, H, W});
            return max_abs_diff(maxpool2d(x, PoolParams{k, s}).output, naive_maxpool2d(x, k, s));
        });
    EXPECT_GT(r.cases, 1000u);
    EXPECT_EQ(r.worst, 0.0);
}

TEST(Gradcheck, RelativeErrorDefinition) {
    std::vector<double> a{1.0, 0.0}, n{1.0, 0.0};
    EXPECT_EQ(gradient_relative_error(a, n), 0.0);
    std::vector<double> a2{1.1}, n2{1.0};
    EXPECT_NEAR(gradient_relative_error(a2, n2), 0.1 / 1.1, 1e-12);
    // Tiny entries are judged against 1% of the largest numeric magnitude.
    std::vector<double> a3{1.0, 1e-7}, n3{1.0, 0.0};
    EXPECT_NEAR(gradient_relative_error(a3, n3), 1e-5, 1e-12);
    std::vector<double> a4{1.0};
    EXPECT_TRUE(std::isinf(gradient_relative_error(a4, n3)));
}

TEST(Gradcheck, SuitePassesAndIsReproducible) {
    GradcheckReport first = run_gradcheck(42, 50, 10);
    for (const GradcheckResult& r : first.results) {
        EXPECT_TRUE(r.pass) << r.op << " max error " << r.max_error;
        EXPECT_GE(r.cases, r.op.starts_with("network") ? 10u : 50u) << r.op;
    }
    EXPECT_EQ(first.results.size(), 10u);
    EXPECT_EQ(first.render(), run_gradcheck(42, 50, 10).render());
}

TEST(Gradcheck, DetectsABrokenGradient) {
    // A deliberately wrong analytic gradient must be flagged by the same metric.
    std::vector<double> analytic{1.0, 2.0, 3.0}, numeric{1.0, 2.0, 3.001};
    EXPECT_GT(gradient_relative_error(analytic, numeric), kGradcheckTolerance);
}
