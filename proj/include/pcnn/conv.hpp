#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "pcnn/tensor.hpp"

namespace pcnn {

/// 2-D convolution kernel. Weight layout is [C, D, h, w]:
/// input channels, output channels, kernel height, kernel width.
struct ConvKernel {
    Tensor weights;
    int stride = 1;
    int padding = 0;

    std::size_t in_channels() const { return weights.dim(0); }
    std::size_t out_channels() const { return weights.dim(1); }
    std::size_t kh() const { return weights.dim(2); }
    std::size_t kw() const { return weights.dim(3); }

    void validate() const;
};

struct ConvDims {
    std::size_t c, h, w;   // input
    std::size_t d, kh, kw; // kernel
    std::size_t oh, ow;    // output
    std::size_t k() const { return c * kh * kw; }
    std::size_t p() const { return oh * ow; }
};

/// Checks shapes and computes output dims; throws DimError / ConfigError.
ConvDims conv_dims(const std::vector<std::size_t>& input_shape, const ConvKernel& kernel);

/// Reusable buffers for the im2col path; lets layers avoid reallocation.
struct ConvWorkspace {
    std::vector<double> wmat;   // [D x K]
    std::vector<double> wmat_t; // [K x D]
    std::vector<double> bcol;   // [K x P]  patch matrix, k-major
    std::vector<double> pm;     // [P x K]  patch matrix, p-major
    std::vector<double> gcol;   // [K x P]  gradient w.r.t. patch matrix
};

/// U_d = sum_c W_{c,d} (cross-correlated with) T_c. Zero padding.
Tensor conv2d(const Tensor& input, const ConvKernel& kernel);
Tensor conv2d(const Tensor& input, const ConvKernel& kernel, ConvWorkspace& ws);

/// Adjoint of conv2d: gradients w.r.t. input and weights.
std::pair<Tensor, Tensor> conv2d_backward(const Tensor& input, const ConvKernel& kernel,
                                          const Tensor& grad_out);
std::pair<Tensor, Tensor> conv2d_backward(const Tensor& input, const ConvKernel& kernel,
                                          const Tensor& grad_out, ConvWorkspace& ws);

// Lower-level pieces shared with the powered-convolution layer. The column
// index k runs lexicographically over (c, ki, kj).
void im2col(const double* input, const ConvDims& dm, int stride, int pad, double* bcol, double* pm);
void col2im_acc(const double* gcol, const ConvDims& dm, int stride, int pad, double* grad_input);
void gather_wmat(const Tensor& weights, std::size_t d_begin, std::size_t d_end, double* wmat);
void scatter_wmat_acc(const double* gwmat, std::size_t d_begin, std::size_t d_end, Tensor& grad_weights);

struct MaxPoolResult {
    Tensor output;
    std::vector<std::size_t> argmax; // flat input index per output cell
};

/// 2x2 max-pool with stride 2; ties go to the first row-major maximum.
MaxPoolResult maxpool2d(const Tensor& input);
Tensor maxpool2d_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out,
                          const std::vector<std::size_t>& input_shape);

} // namespace pcnn
