#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deepclass/classes.hpp"
#include "deepclass/dataset.hpp"
#include "deepclass/network.hpp"

namespace deepclass {

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 42;
    /// Save "epoch_NNNN.dcls" into checkpoint_dir every this many epochs; 0 disables.
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;

    /// Throws ArgumentError naming the first invalid field.
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;  // sample-weighted mean over the epoch's batches
    double train_acc = 0;   // accuracy of the training forward passes
    double eval_acc = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    /// `epoch,train_loss,train_acc,eval_acc` with 6-decimal reals.
    std::string to_csv() const;
};

/// velocity = momentum * velocity + grad; param -= lr * velocity. Shapes must agree.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum);

/// Momentum SGD over a whole parameter set; velocities start at zero.
class SgdOptimizer {
public:
    SgdOptimizer(const ParameterSet& params, double lr, double momentum);

    void step(ParameterSet& params, const ParameterSet& grads);
    const ParameterSet& velocity() const noexcept { return velocity_; }

private:
    ParameterSet velocity_;
    double lr_;
    double momentum_;
};

/// Per-epoch sample order: a permutation of [0, n) drawn from the "shuffle" substream.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct Evaluation {
    std::vector<ClassLabel> truths;
    std::vector<ClassLabel> predictions;
    std::vector<std::array<float, kClassCount>> probs;
    double accuracy = 0;
};

/// Predictions in dataset order, batched `batch_size` at a time.
Evaluation evaluate(const Network& net, const ImageSource& data, std::size_t batch_size = 32);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch momentum SGD. Each epoch visits every sample once (last batch may be short),
/// then evaluates on `eval`. Throws DivergenceError on a non-finite loss.
TrainHistory fit(Network& net, const ImageSource& train, const ImageSource& eval, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

}  // namespace deepclass
