#pragma once

#include <cstddef>
#include <vector>

#include "pcnn/common.hpp"
#include "pcnn/tensor.hpp"

namespace pcnn {

// Engineering guards for the learnable exponent/scale. alpha near -1 makes the
// output ~1 for any input and the x-gradient singular, so the open interval is
// kept away from it; beta+1 is the divisor and must stay away from zero.
inline constexpr double kAlphaMin = -1.0 + 0.05;
inline constexpr double kAlphaMax = 3.0;
inline constexpr double kBetaMin = -1.0 + 1e-3;

/// Element-wise mirrored power map: sign(x) * |x|^(alpha+1) / (beta+1).
/// Odd by construction. alpha == 0 and beta == 0 reproduce the identity exactly.
double psi(double x, double alpha, double beta);

/// y_i = psi(x_i, alpha, beta) for all i.
void psi_forward(const double* x, std::size_t n, double alpha, double beta, double* y);
std::vector<double> psi_forward(const std::vector<double>& x, double alpha, double beta);

/// Analytic adjoint of psi_forward. Requires y == psi_forward(x, alpha, beta).
///   d/dalpha = sum_i g_i * y_i * ln|x_i|          (x_i = 0 term is 0)
///   d/dbeta  = sum_i -g_i * y_i / (beta+1)
///   d/dx_i   = (alpha+1) * g_i * y_i / x_i        (0 at x_i = 0)
/// At alpha == 0 the x-gradient uses the well-defined limit g_i/(beta+1), so
/// the identity configuration is an exact pass-through.
void psi_backward(const double* x, const double* y, const double* grad_y, std::size_t n, double alpha,
                  double beta, double* grad_x, double& grad_alpha, double& grad_beta);

struct PsiBackwardResult {
    std::vector<double> grad_x;
    double grad_alpha = 0.0;
    double grad_beta = 0.0;
};
PsiBackwardResult psi_backward(const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& grad_y, double alpha, double beta);

enum class PowMode { InChannel, OutChannel };

/// Learnable exponent/scale table with Lambda-group sharing.
///
/// InChannel: the D output channels split into Lambda contiguous portions;
/// slot(c, lambda) = c * Lambda + lambda, Lambda*C pairs total.
/// OutChannel: the C input channels split instead;
/// slot(d, lambda) = d * Lambda + lambda, Lambda*D pairs total.
/// With split_sign, negative inputs read a second table half at offset slots().
struct PowParams {
    PowMode mode = PowMode::InChannel;
    std::size_t groups = 1; // Lambda
    std::vector<double> alpha;
    std::vector<double> beta;
    bool split_sign = false;

    /// Identity-initialized table for a [C -> D] convolution.
    static PowParams make(PowMode mode, std::size_t groups, std::size_t in_channels, std::size_t out_channels,
                          bool split_sign = false);

    std::size_t slots() const { return split_sign ? alpha.size() / 2 : alpha.size(); }

    std::size_t group_of(std::size_t split_channel) const; // requires layout set by make()
    std::size_t slot(std::size_t own_channel, std::size_t lambda) const { return own_channel * groups + lambda; }

    bool identity() const; // all alpha == 0 and beta == 0

    void validate(std::size_t in_channels, std::size_t out_channels) const;
    void clamp_into_bounds();

private:
    std::size_t split_count_ = 0; // channels being grouped (D for InChannel, C for OutChannel)
};

} // namespace pcnn
