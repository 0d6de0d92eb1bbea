#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isopoint/tensor.hpp"

namespace isopoint::ag {

enum class OptimizerKind { NAdam, Adagrad };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::NAdam;
    double learning_rate = 0.001;
    double beta1 = 0.9;    // NAdam only
    double beta2 = 0.999;  // NAdam only
    double epsilon = 1e-8;
};

/// NAdam / Adagrad over a fixed parameter list. Gradients are read from each
/// parameter's .grad(); call ParamStore::zero_grad() between steps.
/// Learning-rate halving is driven externally via set_learning_rate.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, const std::vector<Tensor>& params);

    void step();
    double learning_rate() const { return cfg_.learning_rate; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
    std::int64_t step_count() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m1_;  // first moment (NAdam) / squared accumulator (Adagrad)
    std::vector<std::vector<double>> m2_;  // second moment (NAdam only)
    std::int64_t t_ = 0;
};

}  // namespace isopoint::ag
