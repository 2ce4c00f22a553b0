#include "pcnn/powfn.hpp"

#include <algorithm>
#include <cmath>

namespace pcnn {

namespace {

inline void check_bounds(double alpha, double beta) {
    if (!(alpha > kAlphaMin - 1e-15 && alpha <= kAlphaMax + 1e-15))
        throw ConfigError("alpha " + std::to_string(alpha) + " outside (" + std::to_string(kAlphaMin) + ", " +
                          std::to_string(kAlphaMax) + "]");
    if (!(beta > kBetaMin - 1e-15))
        throw ConfigError("beta " + std::to_string(beta) + " below " + std::to_string(kBetaMin));
}

// |x|^(alpha+1), exact pass-through at alpha == 0
inline double pow_abs(double ax, double alpha) {
    if (alpha == 0.0) return ax;
    if (ax == 0.0) return 0.0;
    return std::exp((alpha + 1.0) * std::log(ax));
}

} // namespace

double psi(double x, double alpha, double beta) {
    const double scale = beta + 1.0;
    if (x >= 0.0) return pow_abs(x, alpha) / scale;
    return -pow_abs(-x, alpha) / scale;
}

void psi_forward(const double* x, std::size_t n, double alpha, double beta, double* y) {
    check_bounds(alpha, beta);
    const double scale = beta + 1.0;
    if (alpha == 0.0 && beta == 0.0) {
        std::copy(x, x + n, y);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        y[i] = v >= 0.0 ? pow_abs(v, alpha) / scale : -pow_abs(-v, alpha) / scale;
    }
}

std::vector<double> psi_forward(const std::vector<double>& x, double alpha, double beta) {
    std::vector<double> y(x.size());
    psi_forward(x.data(), x.size(), alpha, beta, y.data());
    return y;
}

void psi_backward(const double* x, const double* y, const double* grad_y, std::size_t n, double alpha,
                  double beta, double* grad_x, double& grad_alpha, double& grad_beta) {
    check_bounds(alpha, beta);
    const double inv_scale = 1.0 / (beta + 1.0);
    double ga = 0.0;
    double gyy = 0.0; // sum g_i * y_i
    if (alpha == 0.0) {
        // y/x == 1/(beta+1) everywhere, including the x -> 0 limit;
        // with beta == 0 this multiplies by exactly 1.0
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad_y[i];
            grad_x[i] = g * inv_scale;
            gyy += g * y[i];
            const double ax = std::abs(x[i]);
            if (ax != 0.0) ga += g * y[i] * std::log(ax);
        }
    } else {
        const double a1 = alpha + 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad_y[i];
            const double xv = x[i];
            grad_x[i] = xv == 0.0 ? 0.0 : a1 * g * y[i] / xv;
            gyy += g * y[i];
            const double ax = std::abs(xv);
            if (ax != 0.0) ga += g * y[i] * std::log(ax);
        }
    }
    grad_alpha += ga;
    grad_beta += -gyy * inv_scale;
}

PsiBackwardResult psi_backward(const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& grad_y, double alpha, double beta) {
    if (x.size() != y.size() || x.size() != grad_y.size())
        throw DimError("psi_backward: x, y, grad_y lengths differ");
    PsiBackwardResult r;
    r.grad_x.resize(x.size());
    psi_backward(x.data(), y.data(), grad_y.data(), x.size(), alpha, beta, r.grad_x.data(), r.grad_alpha,
                 r.grad_beta);
    return r;
}

PowParams PowParams::make(PowMode mode, std::size_t groups, std::size_t in_channels, std::size_t out_channels,
                          bool split_sign) {
    PowParams p;
    p.mode = mode;
    p.groups = groups;
    p.split_sign = split_sign;
    const std::size_t own = mode == PowMode::InChannel ? in_channels : out_channels;
    p.split_count_ = mode == PowMode::InChannel ? out_channels : in_channels;
    if (groups == 0 || p.split_count_ % groups != 0)
        throw ConfigError("Lambda=" + std::to_string(groups) + " does not divide the split channel count " +
                          std::to_string(p.split_count_));
    const std::size_t n = own * groups * (split_sign ? 2 : 1);
    p.alpha.assign(n, 0.0);
    p.beta.assign(n, 0.0);
    return p;
}

std::size_t PowParams::group_of(std::size_t split_channel) const {
    return split_channel / (split_count_ / groups);
}

bool PowParams::identity() const {
    for (double a : alpha)
        if (a != 0.0) return false;
    for (double b : beta)
        if (b != 0.0) return false;
    return true;
}

void PowParams::validate(std::size_t in_channels, std::size_t out_channels) const {
    const std::size_t own = mode == PowMode::InChannel ? in_channels : out_channels;
    const std::size_t split = mode == PowMode::InChannel ? out_channels : in_channels;
    if (groups == 0 || split % groups != 0)
        throw ConfigError("Lambda does not divide the split channel count");
    const std::size_t n = own * groups * (split_sign ? 2 : 1);
    if (alpha.size() != n || beta.size() != n)
        throw DimError("PowParams table has " + std::to_string(alpha.size()) + " slots, layer needs " +
                       std::to_string(n));
    for (double a : alpha) check_bounds(a, 0.0);
    for (double b : beta) check_bounds(0.0, b);
}

void PowParams::clamp_into_bounds() {
    for (double& a : alpha) a = std::clamp(a, kAlphaMin + 1e-12, kAlphaMax);
    for (double& b : beta) b = std::max(b, kBetaMin + 1e-12);
}

} // namespace pcnn
