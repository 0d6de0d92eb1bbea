#include "isopoint/optim.hpp"

#include <cmath>

namespace isopoint::ag {

Optimizer::Optimizer(OptimizerConfig config, const std::vector<Tensor>& params)
    : cfg_(config), params_(params) {
    if (cfg_.learning_rate <= 0.0) throw DataError("learning rate must be positive");
    m1_.reserve(params_.size());
    m2_.reserve(params_.size());
    for (const auto& p : params_) {
        m1_.emplace_back(p.size(), 0.0);
        m2_.emplace_back(cfg_.kind == OptimizerKind::NAdam ? p.size() : 0, 0.0);
    }
}

void Optimizer::step() {
    ++t_;
    const double lr = cfg_.learning_rate;
    const double eps = cfg_.epsilon;
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        if (!p.requires_grad()) continue;
        auto& values = p.values();
        auto& grad = p.grad();
        auto& m1 = m1_[pi];
        if (cfg_.kind == OptimizerKind::Adagrad) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grad[i];
                m1[i] += g * g;
                values[i] -= lr * g / (std::sqrt(m1[i]) + eps);
            }
        } else {
            // Nesterov-accelerated Adam
            auto& m2 = m2_[pi];
            const double b1 = cfg_.beta1, b2 = cfg_.beta2;
            const double b1t = std::pow(b1, static_cast<double>(t_));
            const double b1t1 = b1t * b1;
            const double b2t = std::pow(b2, static_cast<double>(t_));
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grad[i];
                m1[i] = b1 * m1[i] + (1.0 - b1) * g;
                m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
                const double m_nesterov =
                    b1 * m1[i] / (1.0 - b1t1) + (1.0 - b1) * g / (1.0 - b1t);
                values[i] -= lr * m_nesterov / (std::sqrt(m2[i] / (1.0 - b2t)) + eps);
            }
        }
    }
}

}  // namespace isopoint::ag
