#include "deepclass/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "deepclass/errors.hpp"
#include "deepclass/rng.hpp"

namespace deepclass {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ArgumentError("learning rate must be non-negative, got " + std::to_string(learning_rate));
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ArgumentError("momentum must lie in [0, 1), got " + std::to_string(momentum));
    if (batch_size == 0) throw ArgumentError("batch size must be positive");
    if (epochs == 0) throw ArgumentError("epoch count must be positive");
    if (checkpoint_every > 0 && checkpoint_dir.empty())
        throw ArgumentError("periodic checkpoints need a checkpoint directory");
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,train_acc,eval_acc\n";
    char buf[128];
    for (const EpochRecord& r : epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", r.epoch, r.train_loss, r.train_acc, r.eval_acc);
        os << buf;
    }
    return os.str();
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum) {
    if (param.shape() != grad.shape() || param.shape() != velocity.shape())
        throw DimensionError("sgd_step shapes differ: param " + shape_string(param.shape()) + ", grad " +
                             shape_string(grad.shape()) + ", velocity " + shape_string(velocity.shape()));
    for (std::size_t i = 0; i < param.size(); ++i) {
        double v = momentum * double(velocity[i]) + double(grad[i]);
        velocity[i] = static_cast<float>(v);
        param[i] = static_cast<float>(double(param[i]) - lr * double(velocity[i]));
    }
}

SgdOptimizer::SgdOptimizer(const ParameterSet& params, double lr, double momentum) : lr_(lr), momentum_(momentum) {
    for (const Parameter& p : params) velocity_.push_back({p.name, Tensor(p.value.shape())});
}

void SgdOptimizer::step(ParameterSet& params, const ParameterSet& grads) {
    if (params.size() != velocity_.size() || grads.size() != velocity_.size())
        throw DimensionError("optimizer step: parameter/gradient set sizes differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != grads[i].name)
            throw DimensionError("gradient '" + grads[i].name + "' does not match parameter '" + params[i].name + "'");
        sgd_step(params[i].value, grads[i].value, velocity_[i].value, lr_, momentum_);
    }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "shuffle"), "epoch/" + std::to_string(epoch));
    rng.shuffle(order);
    return order;
}

Evaluation evaluate(const Network& net, const ImageSource& data, std::size_t batch_size) {
    if (data.size() == 0) throw ArgumentError("evaluate needs a non-empty dataset");
    if (batch_size == 0) throw ArgumentError("evaluate batch size must be positive");
    Evaluation ev;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        std::size_t end = std::min(data.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        auto [batch, target] = make_batch(data, idx);
        Prediction p = net.predict(batch);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            ClassLabel truth = data.label(idx[b]);
            ClassLabel pred = static_cast<ClassLabel>(p.classes[b]);
            ev.truths.push_back(truth);
            ev.predictions.push_back(pred);
            std::array<float, kClassCount> row{};
            for (std::size_t k = 0; k < kClassCount && k < p.probs.dim(1); ++k) row[k] = p.probs[b * p.probs.dim(1) + k];
            ev.probs.push_back(row);
            correct += truth == pred;
        }
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return ev;
}

TrainHistory fit(Network& net, const ImageSource& train, const ImageSource& eval, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.size() == 0 || eval.size() == 0) throw ArgumentError("fit needs non-empty training and evaluation sets");
    if (cfg.checkpoint_every > 0) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.checkpoint_dir, ec);
        if (ec) throw IoError("cannot create " + cfg.checkpoint_dir.string() + ": " + ec.message());
    }

    SgdOptimizer opt(net.parameters(), cfg.learning_rate, cfg.momentum);
    TrainHistory history;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = epoch_order(train.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            auto [batch, target] = make_batch(train, idx);
            Tensor logits = net.forward(batch, true);
            SoftmaxXent sx = softmax_xent(logits, target);
            if (!std::isfinite(sx.loss) || !logits.all_finite()) {
                net.clear_cache();
                throw DivergenceError(epoch, batch_no + 1);
            }
            loss_sum += sx.loss * static_cast<double>(idx.size());
            auto pred = argmax_rows(logits);
            for (std::size_t b = 0; b < idx.size(); ++b) correct += pred[b] == index_of(train.label(idx[b]));
            ParameterSet grads = net.backward(sx.d_logits);
            opt.step(net.parameters(), grads);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
        rec.eval_acc = evaluate(net, eval, cfg.batch_size).accuracy;
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04zu.dcls", epoch);
            save_checkpoint(net, cfg.checkpoint_dir / name);
        }
    }
    return history;
}

}  // namespace deepclass
