#include "pcnn/conv.hpp"

#include <algorithm>
#include <cstring>

#include "pcnn/gemm.hpp"

namespace pcnn {

void ConvKernel::validate() const {
    if (weights.rank() != 4) throw DimError("kernel weights must be rank 4 [C,D,h,w], got " + shape_str(weights.shape()));
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (padding < 0) throw ConfigError("padding must be >= 0");
    if (std::size_t(padding) >= kh() || std::size_t(padding) >= kw())
        throw ConfigError("padding must be smaller than the kernel extent");
}

ConvDims conv_dims(const std::vector<std::size_t>& input_shape, const ConvKernel& kernel) {
    kernel.validate();
    if (input_shape.size() != 3) throw DimError("conv2d input must be rank 3 [C,H,W], got " + shape_str(input_shape));
    ConvDims dm;
    dm.c = input_shape[0];
    dm.h = input_shape[1];
    dm.w = input_shape[2];
    dm.d = kernel.out_channels();
    dm.kh = kernel.kh();
    dm.kw = kernel.kw();
    if (dm.c != kernel.in_channels())
        throw DimError("input has " + std::to_string(dm.c) + " channels, kernel expects " +
                       std::to_string(kernel.in_channels()));
    const long hn = long(dm.h) + 2 * kernel.padding - long(dm.kh);
    const long wn = long(dm.w) + 2 * kernel.padding - long(dm.kw);
    if (hn < 0 || wn < 0 || hn % kernel.stride != 0 || wn % kernel.stride != 0)
        throw ConfigError("output size (" + std::to_string(hn) + "," + std::to_string(wn) +
                          ")/" + std::to_string(kernel.stride) + "+1 is not a positive integer");
    dm.oh = std::size_t(hn / kernel.stride) + 1;
    dm.ow = std::size_t(wn / kernel.stride) + 1;
    return dm;
}

void im2col(const double* input, const ConvDims& dm, int stride, int pad, double* bcol, double* pm) {
    const std::size_t K = dm.k();
    const std::size_t P = dm.p();
    std::size_t k = 0;
    for (std::size_t c = 0; c < dm.c; ++c) {
        const double* plane = input + c * dm.h * dm.w;
        for (std::size_t ki = 0; ki < dm.kh; ++ki) {
            for (std::size_t kj = 0; kj < dm.kw; ++kj, ++k) {
                double* brow = bcol ? bcol + k * P : nullptr;
                std::size_t p = 0;
                for (std::size_t oi = 0; oi < dm.oh; ++oi) {
                    const long ii = long(oi) * stride + long(ki) - pad;
                    const bool row_ok = ii >= 0 && ii < long(dm.h);
                    for (std::size_t oj = 0; oj < dm.ow; ++oj, ++p) {
                        const long jj = long(oj) * stride + long(kj) - pad;
                        const double v =
                            (row_ok && jj >= 0 && jj < long(dm.w)) ? plane[std::size_t(ii) * dm.w + std::size_t(jj)] : 0.0;
                        if (brow) brow[p] = v;
                        if (pm) pm[p * K + k] = v;
                    }
                }
            }
        }
    }
}

void col2im_acc(const double* gcol, const ConvDims& dm, int stride, int pad, double* grad_input) {
    const std::size_t P = dm.p();
    std::size_t k = 0;
    for (std::size_t c = 0; c < dm.c; ++c) {
        double* plane = grad_input + c * dm.h * dm.w;
        for (std::size_t ki = 0; ki < dm.kh; ++ki) {
            for (std::size_t kj = 0; kj < dm.kw; ++kj, ++k) {
                const double* grow = gcol + k * P;
                std::size_t p = 0;
                for (std::size_t oi = 0; oi < dm.oh; ++oi) {
                    const long ii = long(oi) * stride + long(ki) - pad;
                    if (ii < 0 || ii >= long(dm.h)) {
                        p += dm.ow;
                        continue;
                    }
                    for (std::size_t oj = 0; oj < dm.ow; ++oj, ++p) {
                        const long jj = long(oj) * stride + long(kj) - pad;
                        if (jj >= 0 && jj < long(dm.w)) plane[std::size_t(ii) * dm.w + std::size_t(jj)] += grow[p];
                    }
                }
            }
        }
    }
}

void gather_wmat(const Tensor& weights, std::size_t d_begin, std::size_t d_end, double* wmat) {
    const std::size_t c_n = weights.dim(0), d_n = weights.dim(1), khw = weights.dim(2) * weights.dim(3);
    const double* w = weights.data();
    for (std::size_t d = d_begin; d < d_end; ++d) {
        double* row = wmat + (d - d_begin) * c_n * khw;
        for (std::size_t c = 0; c < c_n; ++c) {
            const double* src = w + (c * d_n + d) * khw;
            std::memcpy(row + c * khw, src, khw * sizeof(double));
        }
    }
}

void scatter_wmat_acc(const double* gwmat, std::size_t d_begin, std::size_t d_end, Tensor& grad_weights) {
    const std::size_t c_n = grad_weights.dim(0), d_n = grad_weights.dim(1),
                      khw = grad_weights.dim(2) * grad_weights.dim(3);
    double* gw = grad_weights.data();
    for (std::size_t d = d_begin; d < d_end; ++d) {
        const double* row = gwmat + (d - d_begin) * c_n * khw;
        for (std::size_t c = 0; c < c_n; ++c) {
            double* dst = gw + (c * d_n + d) * khw;
            for (std::size_t t = 0; t < khw; ++t) dst[t] += row[c * khw + t];
        }
    }
}

Tensor conv2d(const Tensor& input, const ConvKernel& kernel) {
    ConvWorkspace ws;
    return conv2d(input, kernel, ws);
}

Tensor conv2d(const Tensor& input, const ConvKernel& kernel, ConvWorkspace& ws) {
    const ConvDims dm = conv_dims(input.shape(), kernel);
    const std::size_t K = dm.k(), P = dm.p();
    ws.wmat.resize(dm.d * K);
    ws.bcol.resize(K * P);
    gather_wmat(kernel.weights, 0, dm.d, ws.wmat.data());
    im2col(input.data(), dm, kernel.stride, kernel.padding, ws.bcol.data(), nullptr);
    Tensor out({dm.d, dm.oh, dm.ow});
    gemm(ws.wmat.data(), ws.bcol.data(), out.data(), dm.d, K, P);
    return out;
}

std::pair<Tensor, Tensor> conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out) {
    ConvWorkspace ws;
    return conv2d_backward(input, kernel, grad_out, ws);
}

std::pair<Tensor, Tensor> conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out,
                                          ConvWorkspace& ws) {
    const ConvDims dm = conv_dims(input.shape(), kernel);
    if (grad_out.shape() != std::vector<std::size_t>{dm.d, dm.oh, dm.ow})
        throw DimError("grad_out shape " + shape_str(grad_out.shape()) + " does not match conv output");
    const std::size_t K = dm.k(), P = dm.p();
    ws.wmat_t.resize(K * dm.d);
    ws.pm.resize(P * K);
    ws.gcol.resize(K * P);
    ws.wmat.resize(dm.d * K);

    im2col(input.data(), dm, kernel.stride, kernel.padding, nullptr, ws.pm.data());

    // dL/dW = grad_out [D x P] * patches [P x K]
    std::vector<double> gwmat(dm.d * K);
    gemm(grad_out.data(), ws.pm.data(), gwmat.data(), dm.d, P, K);
    Tensor grad_weights(kernel.weights.shape());
    scatter_wmat_acc(gwmat.data(), 0, dm.d, grad_weights);

    // dL/dT = col2im( W^T [K x D] * grad_out [D x P] )
    gather_wmat(kernel.weights, 0, dm.d, ws.wmat.data());
    transpose(ws.wmat.data(), ws.wmat_t.data(), dm.d, K);
    gemm(ws.wmat_t.data(), grad_out.data(), ws.gcol.data(), K, dm.d, P);
    Tensor grad_input(input.shape());
    col2im_acc(ws.gcol.data(), dm, kernel.stride, kernel.padding, grad_input.data());
    return {std::move(grad_input), std::move(grad_weights)};
}

MaxPoolResult maxpool2d(const Tensor& input) {
    if (input.rank() != 3) throw DimError("maxpool2d input must be rank 3 [C,H,W]");
    const std::size_t c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0 || w % 2 != 0) throw DimError("maxpool2d requires even spatial dims, got " + shape_str(input.shape()));
    MaxPoolResult r{Tensor({c_n, h / 2, w / 2}), {}};
    r.argmax.resize(r.output.size());
    const double* in = input.data();
    std::size_t o = 0;
    for (std::size_t c = 0; c < c_n; ++c) {
        const std::size_t base = c * h * w;
        for (std::size_t i = 0; i < h; i += 2) {
            for (std::size_t j = 0; j < w; j += 2, ++o) {
                // row-major scan; strict > keeps the first maximal element
                std::size_t best = base + i * w + j;
                double bv = in[best];
                const std::size_t cand[3] = {base + i * w + j + 1, base + (i + 1) * w + j, base + (i + 1) * w + j + 1};
                for (std::size_t idx : cand) {
                    if (in[idx] > bv) {
                        bv = in[idx];
                        best = idx;
                    }
                }
                r.output[o] = bv;
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool2d_backward(const std::vector<std::size_t>& argmax, const Tensor& grad_out,
                          const std::vector<std::size_t>& input_shape) {
    if (argmax.size() != grad_out.size()) throw DimError("argmax map size does not match grad_out");
    Tensor grad_input(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_out[o];
    return grad_input;
}

} // namespace pcnn
