#include "pcnn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pcnn/powfn.hpp"

namespace pcnn {

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (weight_decay < 0.0 || pow_l2 < 0.0) throw ConfigError("decay terms must be >= 0");
    if (cos_shrink_threshold < 0.0) throw ConfigError("cos_shrink_threshold must be >= 0");
    if (!(cos_shrink_floor > 0.0 && cos_shrink_floor <= 1.0)) throw ConfigError("cos_shrink_floor must be in (0,1]");
}

void sgd_nesterov_step(double* value, const double* grad, double* velocity, std::size_t n,
                       const OptimConfig& cfg) {
    const double mu = cfg.momentum, lr = cfg.learning_rate;
    if (cfg.nesterov) {
        for (std::size_t i = 0; i < n; ++i) {
            const double step = -lr * grad[i];
            velocity[i] = mu * velocity[i] + step;
            value[i] += mu * velocity[i] + step;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            velocity[i] = mu * velocity[i] - lr * grad[i];
            value[i] += velocity[i];
        }
    }
}

double pow_grad_adjust_alpha(double grad, double alpha, const OptimConfig& cfg) {
    double g = grad + cfg.pow_l2 * alpha;
    if (std::abs(alpha) > cfg.cos_shrink_threshold) {
        const double mult = std::clamp(std::cos(1.5707963267948966 * alpha), cfg.cos_shrink_floor, 1.0);
        g *= mult;
    }
    return g;
}

double pow_grad_adjust_beta(double grad, double beta, const OptimConfig& cfg) {
    return grad + cfg.pow_l2 * beta;
}

void SgdOptimizer::step(const std::vector<ParamRef>& params) {
    if (velocity_.size() < params.size()) velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamRef& p = params[i];
        if (velocity_[i].size() != p.n) velocity_[i].assign(p.n, 0.0);
        adjusted_.resize(p.n);
        switch (p.kind) {
        case ParamKind::Weight:
            for (std::size_t j = 0; j < p.n; ++j) adjusted_[j] = p.grad[j] + cfg_.weight_decay * p.value[j];
            break;
        case ParamKind::PowAlpha:
            for (std::size_t j = 0; j < p.n; ++j) adjusted_[j] = pow_grad_adjust_alpha(p.grad[j], p.value[j], cfg_);
            break;
        case ParamKind::PowBeta:
            for (std::size_t j = 0; j < p.n; ++j) adjusted_[j] = pow_grad_adjust_beta(p.grad[j], p.value[j], cfg_);
            break;
        default:
            std::copy(p.grad, p.grad + p.n, adjusted_.begin());
            break;
        }
        sgd_nesterov_step(p.value, adjusted_.data(), velocity_[i].data(), p.n, cfg_);
        if (p.kind == ParamKind::PowAlpha)
            for (std::size_t j = 0; j < p.n; ++j) p.value[j] = std::clamp(p.value[j], kAlphaMin + 1e-12, kAlphaMax);
        if (p.kind == ParamKind::PowBeta)
            for (std::size_t j = 0; j < p.n; ++j) p.value[j] = std::max(p.value[j], kBetaMin + 1e-12);
    }
}

} // namespace pcnn
