#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "deepclass/errors.hpp"
#include "deepclass/synthetic.hpp"
#include "deepclass/trainer.hpp"
#include "oracles.hpp"

using namespace deepclass;
using deepclass::testing::random_tensor;

namespace {

NetworkSpec small_spec() {
    NetworkSpec s;
    s.channels = 3;
    s.height = 8;
    s.width = 8;
    s.class_count = 7;
    s.layers = {LayerSpec::conv(4, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2), LayerSpec::flatten(),
                LayerSpec::dense(16),        LayerSpec::relu(), LayerSpec::dense(7)};
    return s;
}

Network small_net(std::uint64_t seed) { return Network::initialized(small_spec(), seed, CensusPolicy::any); }

}  // namespace

TEST(SgdStep, SingleStepWithoutMomentum) {
    Tensor w({1}, 1.0f), g({1}, 1.0f), v({1});
    sgd_step(w, g, v, 0.1, 0.0);
    EXPECT_FLOAT_EQ(w[0], 0.9f);
}

TEST(SgdStep, MomentumRecurrence) {
    Tensor w({1}, 1.0f), g({1}, 1.0f), v({1});
    sgd_step(w, g, v, 0.1, 0.9);
    EXPECT_FLOAT_EQ(v[0], 1.0f);
    EXPECT_FLOAT_EQ(w[0], 0.9f);
    sgd_step(w, g, v, 0.1, 0.9);
    EXPECT_FLOAT_EQ(v[0], 1.9f);
    EXPECT_NEAR(w[0], 0.71f, 1e-6);
}

TEST(SgdStep, ZeroGradientLeavesParameters) {
    Tensor w = Tensor::from({3}, {1, -2, 3}), g({3}), v({3});
    Tensor before = w;
    sgd_step(w, g, v, 0.5, 0.9);
    EXPECT_TRUE(w == before);
    EXPECT_THROW(sgd_step(w, Tensor({2}), v, 0.1, 0.9), DimensionError);
}

TEST(SgdOptimizer, TouchesExactlyTheParametersWithGradient) {
    Network net = small_net(3);
    ParameterSet grads;
    for (const Parameter& p : net.parameters()) grads.push_back({p.name, Tensor(p.value.shape())});
    grads[0].value[5] = 1.0f;
    grads[2].value[0] = -2.0f;
    ParameterSet before = net.parameters();
    SgdOptimizer opt(net.parameters(), 0.1, 0.0);
    opt.step(net.parameters(), grads);
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].value.size(); ++j) {
            bool changed = net.parameters()[i].value[j] != before[i].value[j];
            EXPECT_EQ(changed, grads[i].value[j] != 0.0f) << grads[i].name << "[" << j << "]";
        }
    std::swap(grads[0].name, grads[1].name);
    EXPECT_THROW(opt.step(net.parameters(), grads), DimensionError);
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.seed, 42u);
    cfg.learning_rate = -1;
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg = {};
    cfg.momentum = 1.0;
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg = {};
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg = {};
    cfg.checkpoint_every = 2;
    EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(EpochOrder, IsSeededPermutation) {
    for (std::size_t epoch = 1; epoch <= 20; ++epoch) {
        auto order = epoch_order(37, 42, epoch);
        std::set<std::size_t> seen(order.begin(), order.end());
        EXPECT_EQ(seen.size(), 37u);
        EXPECT_EQ(*seen.rbegin(), 36u);
        EXPECT_EQ(order, epoch_order(37, 42, epoch));
    }
    EXPECT_NE(epoch_order(37, 42, 1), epoch_order(37, 42, 2));
    EXPECT_NE(epoch_order(37, 42, 1), epoch_order(37, 43, 1));
}

TEST(Evaluate, OrderAndAccuracy) {
    InMemoryImages data = synthetic_color_set(8);
    Network net = small_net(1);
    Evaluation ev = evaluate(net, data, 3);
    ASSERT_EQ(ev.predictions.size(), data.size());
    ASSERT_EQ(ev.probs.size(), data.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(ev.truths[i], data.label(i));
        correct += ev.truths[i] == ev.predictions[i];
    }
    EXPECT_DOUBLE_EQ(ev.accuracy, double(correct) / double(data.size()));
    // Batching does not change results.
    Evaluation one = evaluate(net, data, 1);
    EXPECT_EQ(one.predictions, ev.predictions);

    InMemoryImages empty;
    EXPECT_THROW(evaluate(net, empty), ArgumentError);
}

TEST(Evaluate, SingleSampleAccuracyIsZeroOrOne) {
    InMemoryImages data;
    data.add("x", Tensor({3, 8, 8}, 0.5f), ClassLabel::VL);
    Evaluation ev = evaluate(small_net(2), data);
    EXPECT_TRUE(ev.accuracy == 0.0 || ev.accuracy == 1.0);
}

TEST(Fit, ZeroLearningRateKeepsInitialization) {
    InMemoryImages data = synthetic_color_set(8);
    Network net = small_net(4);
    ParameterSet init = net.parameters();
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    TrainHistory h = fit(net, data, data, cfg);
    EXPECT_EQ(h.epochs.size(), 3u);
    for (std::size_t i = 0; i < init.size(); ++i) EXPECT_TRUE(net.parameters()[i].value == init[i].value);
}

TEST(Fit, DeterministicAcrossRuns) {
    InMemoryImages data = synthetic_color_set(8);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 4;
    Network a = small_net(5), b = small_net(5);
    TrainHistory ha = fit(a, data, data, cfg);
    TrainHistory hb = fit(b, data, data, cfg);
    EXPECT_EQ(ha.to_csv(), hb.to_csv());
    EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
}

TEST(Fit, SmallNetworkLearnsColourSet) {
    InMemoryImages data = synthetic_color_set(8);
    Network net = small_net(6);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 60;
    TrainHistory h = fit(net, data, data, cfg);
    EXPECT_EQ(h.epochs.back().train_acc, 1.0);
    EXPECT_EQ(h.epochs.back().eval_acc, 1.0);
    EXPECT_LT(h.epochs.back().train_loss, h.epochs.front().train_loss);
}

TEST(Fit, HistoryCsvAndCallback) {
    InMemoryImages data = synthetic_color_set(8);
    Network net = small_net(7);
    TrainConfig cfg;
    cfg.batch_size = 5;  // 14 samples: batches of 5, 5, 4
    cfg.epochs = 2;
    std::vector<std::size_t> seen;
    TrainHistory h = fit(net, data, data, cfg, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
    EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2}));
    std::string csv = h.to_csv();
    EXPECT_TRUE(csv.starts_with("epoch,train_loss,train_acc,eval_acc\n1,"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Fit, PeriodicCheckpoints) {
    auto dir = std::filesystem::temp_directory_path() / "deepclass_fit_ckpt";
    std::filesystem::remove_all(dir);
    InMemoryImages data = synthetic_color_set(8);
    Network net = small_net(8);
    TrainConfig cfg;
    cfg.batch_size = 7;
    cfg.epochs = 4;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_dir = dir;
    fit(net, data, data, cfg);
    EXPECT_TRUE(std::filesystem::exists(dir / "epoch_0002.dcls"));
    EXPECT_TRUE(std::filesystem::exists(dir / "epoch_0004.dcls"));
    EXPECT_FALSE(std::filesystem::exists(dir / "epoch_0001.dcls"));
    EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir / "epoch_0004.dcls")), serialize_checkpoint(net));
    std::filesystem::remove_all(dir);
}

TEST(Fit, DivergenceIsReported) {
    InMemoryImages data;
    Tensor bad({3, 8, 8}, 1.0f);
    bad[0] = std::numeric_limits<float>::infinity();
    data.add("bad", bad, ClassLabel::M);
    Network net = small_net(9);
    TrainConfig cfg;
    cfg.epochs = 1;
    try {
        fit(net, data, data, cfg);
        FAIL() << "non-finite loss accepted";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.epoch(), 1u);
        EXPECT_EQ(e.batch(), 1u);
    }
}

TEST(Fit, RejectsEmptyData) {
    InMemoryImages empty;
    InMemoryImages data = synthetic_color_set(8);
    Network net = small_net(10);
    EXPECT_THROW(fit(net, empty, data, TrainConfig{}), ArgumentError);
    EXPECT_THROW(fit(net, data, empty, TrainConfig{}), ArgumentError);
}
