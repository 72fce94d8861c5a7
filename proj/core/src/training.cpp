#include "neumiss/training.hpp"

#include <string>

namespace neumiss {

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd" || name == "SGD") return OptimizerKind::sgd;
    if (name == "adam" || name == "ADAM") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train config: batch_size must be at least 1");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) {
        throw ConfigError("train config: lr_decay_factor must lie in (0, 1)");
    }
    if (!(lr_floor >= 0.0)) throw ConfigError("train config: lr_floor must be non-negative");
    if (!(plateau_threshold >= 0.0)) throw ConfigError("train config: plateau_threshold must be non-negative");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("train config: validation_fraction must lie in [0, 1)");
    }
}

TrainConfig neumiss_train_defaults() {
    TrainConfig cfg;
    cfg.batch_size = 10;
    cfg.optimizer = OptimizerKind::sgd;
    return cfg;
}

TrainConfig mlp_train_defaults() {
    TrainConfig cfg;
    cfg.batch_size = 200;
    cfg.optimizer = OptimizerKind::adam;
    return cfg;
}

Optimizer::Optimizer(OptimizerKind kind, Index n_params) : kind_(kind) {
    if (kind_ == OptimizerKind::adam) {
        m_.assign(n_params, 0.0);
        v_.assign(n_params, 0.0);
    }
}

void Optimizer::step(std::span<const std::span<double>> params,
                     std::span<const std::span<double>> grads, double lr) {
    if (params.size() != grads.size()) throw ShapeMismatch("Optimizer::step: block count mismatch");
    if (kind_ == OptimizerKind::sgd) {
        for (Index b = 0; b < params.size(); ++b) {
            auto p = params[b];
            const auto g = grads[b];
            for (Index i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
        }
        return;
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    Index k = 0;
    for (Index b = 0; b < params.size(); ++b) {
        auto p = params[b];
        const auto g = grads[b];
        for (Index i = 0; i < p.size(); ++i, ++k) {
            m_[k] = beta1 * m_[k] + (1.0 - beta1) * g[i];
            v_[k] = beta2 * v_[k] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps);
        }
    }
}

PlateauSchedule::PlateauSchedule(double lr_init, double factor, Index patience, double threshold,
                                 double floor)
    : lr_(lr_init), factor_(factor), patience_(patience), threshold_(threshold), floor_(floor) {}

double PlateauSchedule::observe(double loss) {
    if (loss < best_ * (1.0 - threshold_)) {
        best_ = loss;
        bad_epochs_ = 0;
    } else if (++bad_epochs_ >= patience_) {
        lr_ *= factor_;
        bad_epochs_ = 0;
    }
    return lr_;
}

} // namespace neumiss
