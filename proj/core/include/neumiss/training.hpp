#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/errors.hpp"
#include "neumiss/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neumiss {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
    Index batch_size = 10;
    /// Non-positive means "1e-2 / d", resolved by the trainer.
    double lr_init = 0.0;
    double lr_decay_factor = 0.2;
    Index plateau_epochs = 2;
    /// Relative improvement below which an epoch counts as a plateau epoch.
    /// 0 counts any epoch that fails to lower the best loss.
    double plateau_threshold = 0.0;
    double lr_floor = 5e-6;
    Index max_epochs = 300;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;

    double resolved_lr(Index d) const noexcept {
        return lr_init > 0.0 ? lr_init : 1e-2 / static_cast<double>(d);
    }
    void validate() const;
};

/// Defaults for NeuMiss: SGD, batch size 10.
TrainConfig neumiss_train_defaults();
/// Defaults for the mask-concatenated MLP: ADAM, batch size 200.
TrainConfig mlp_train_defaults();

struct EpochRecord {
    Index epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    Index best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

/// Element-wise SGD or ADAM (β₁=0.9, β₂=0.999, ε=1e-8) over a list of parameter blocks.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, Index n_params);

    void step(std::span<const std::span<double>> params,
              std::span<const std::span<double>> grads, double lr);

private:
    OptimizerKind kind_;
    Vector m_;
    Vector v_;
    Index t_ = 0;
};

/// Reduce-on-plateau learning-rate schedule.
class PlateauSchedule {
public:
    PlateauSchedule(double lr_init, double factor, Index patience, double threshold, double floor);

    /// Feeds one epoch loss; returns the learning rate for the next epoch.
    double observe(double loss);
    double lr() const noexcept { return lr_; }
    bool finished() const noexcept { return lr_ < floor_; }

private:
    double lr_;
    double factor_;
    Index patience_;
    double threshold_;
    double floor_;
    double best_ = std::numeric_limits<double>::infinity();
    Index bad_epochs_ = 0;
};

/// Mini-batch descent shared by the NeuMiss and MLP trainers.
///
/// `batch_grad(weights, rows, grad)` fills `grad` with the gradient of the
/// batch-mean loss and returns that loss; `val_loss(weights)` scores the
/// validation split. The weights with the lowest validation loss are kept.
/// Weights must provide `parameter_blocks(W&)` found by ADL.
template <class Weights, class BatchGrad, class ValLoss>
TrainHistory minibatch_descent(Weights& weights, Index n_fit, Index d, const TrainConfig& cfg,
                               RngStream& rng, BatchGrad&& batch_grad, ValLoss&& val_loss) {
    cfg.validate();
    TrainHistory history;
    Weights grad = weights;
    Weights best = weights;
    const auto param_blocks = parameter_blocks(weights);
    const auto grad_blocks = parameter_blocks(grad);
    Index n_params = 0;
    for (const auto& b : param_blocks) n_params += b.size();

    Optimizer optimizer(cfg.optimizer, n_params);
    PlateauSchedule schedule(cfg.resolved_lr(d), cfg.lr_decay_factor, cfg.plateau_epochs,
                             cfg.plateau_threshold, cfg.lr_floor);

    std::vector<Index> order(n_fit);
    std::iota(order.begin(), order.end(), Index{0});
    const Index batch = std::min(cfg.batch_size, n_fit);

    history.best_val_loss = val_loss(weights);
    history.best_epoch = 0;
    for (Index epoch = 1; epoch <= cfg.max_epochs && !schedule.finished(); ++epoch) {
        rng.shuffle(order.begin(), order.end());
        const double lr = schedule.lr();
        double loss_sum = 0.0;
        Index n_batches = 0;
        for (Index start = 0; start + batch <= n_fit; start += batch) {
            const double loss =
                batch_grad(weights, std::span<const Index>(order.data() + start, batch), grad);
            if (!std::isfinite(loss)) {
                throw Diverged("training loss became non-finite at epoch " + std::to_string(epoch) +
                               " (learning rate " + std::to_string(lr) + ")");
            }
            optimizer.step(param_blocks, std::span<const std::span<double>>(grad_blocks), lr);
            loss_sum += loss;
            ++n_batches;
        }
        const double train_loss = loss_sum / static_cast<double>(std::max<Index>(n_batches, 1));
        const double val = val_loss(weights);
        if (!std::isfinite(val)) {
            throw Diverged("validation loss became non-finite at epoch " + std::to_string(epoch));
        }
        history.epochs.push_back({epoch, train_loss, val, lr});
        if (val < history.best_val_loss) {
            history.best_val_loss = val;
            history.best_epoch = epoch;
            best = weights;
        }
        schedule.observe(train_loss);
    }
    if (history.best_epoch > 0) weights = best;
    return history;
}

} // namespace neumiss
