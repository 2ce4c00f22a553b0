#pragma once

#include <cstddef>
#include <vector>

#include "pcnn/layers.hpp"

namespace pcnn {

struct OptimConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;         // kernel/linear weights
    double pow_l2 = 1e-4;               // alpha and beta only
    double cos_shrink_threshold = 0.5;  // |alpha| beyond this gets the cos multiplier
    double cos_shrink_floor = 0.01;     // multiplier never drops below (no sign flip)

    void validate() const;
};

/// v <- mu*v - lr*g;  theta <- theta + mu*v - lr*g (Nesterov form).
/// Plain momentum applies theta <- theta + v; momentum 0 reduces both to
/// vanilla gradient descent.
void sgd_nesterov_step(double* value, const double* grad, double* velocity, std::size_t n,
                       const OptimConfig& cfg);

/// The raw alpha-gradient after l2 regularization and the cos(pi*alpha/2)
/// shrink, clamped to [cos_shrink_floor, 1] so the update is attenuated but
/// never reversed.
double pow_grad_adjust_alpha(double grad, double alpha, const OptimConfig& cfg);

/// Beta gets the l2 term only.
double pow_grad_adjust_beta(double grad, double beta, const OptimConfig& cfg);

/// Applies one SGD step across a parameter set, with per-kind treatment:
/// weight decay on Weight, l2 + shrink on PowAlpha, l2 on PowBeta, and a
/// post-step clamp keeping (alpha, beta) inside the PowParams bounds.
class SgdOptimizer {
public:
    explicit SgdOptimizer(OptimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    void step(const std::vector<ParamRef>& params);

    OptimConfig& config() { return cfg_; }
    const OptimConfig& config() const { return cfg_; }

private:
    OptimConfig cfg_;
    std::vector<std::vector<double>> velocity_;
    std::vector<double> adjusted_;
};

} // namespace pcnn
