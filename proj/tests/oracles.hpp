#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (direct summation, window scans, finite differences)
// so they share no code with the library paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include "pcnn/conv.hpp"
#include "pcnn/tensor.hpp"

namespace oracle {

/// Direct quadruple-loop cross-correlation with zero padding.
inline pcnn::Tensor conv2d_direct(const pcnn::Tensor& input, const pcnn::ConvKernel& kernel) {
    const auto dm = pcnn::conv_dims(input.shape(), kernel);
    pcnn::Tensor out({dm.d, dm.oh, dm.ow});
    for (std::size_t d = 0; d < dm.d; ++d)
        for (std::size_t oi = 0; oi < dm.oh; ++oi)
            for (std::size_t oj = 0; oj < dm.ow; ++oj) {
                double acc = 0.0;
                for (std::size_t c = 0; c < dm.c; ++c)
                    for (std::size_t ki = 0; ki < dm.kh; ++ki)
                        for (std::size_t kj = 0; kj < dm.kw; ++kj) {
                            const long ii = long(oi) * kernel.stride + long(ki) - kernel.padding;
                            const long jj = long(oj) * kernel.stride + long(kj) - kernel.padding;
                            if (ii < 0 || jj < 0 || ii >= long(dm.h) || jj >= long(dm.w)) continue;
                            acc += kernel.weights.at(c, d, ki, kj) *
                                   input.at(c, std::size_t(ii), std::size_t(jj));
                        }
                out.at(d, oi, oj) = acc;
            }
    return out;
}

/// Per-window brute-force 2x2 max.
inline pcnn::Tensor maxpool_direct(const pcnn::Tensor& input) {
    const std::size_t c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
    pcnn::Tensor out({c_n, h / 2, w / 2});
    for (std::size_t c = 0; c < c_n; ++c)
        for (std::size_t i = 0; i < h / 2; ++i)
            for (std::size_t j = 0; j < w / 2; ++j) {
                double m = input.at(c, 2 * i, 2 * j);
                m = std::max(m, input.at(c, 2 * i, 2 * j + 1));
                m = std::max(m, input.at(c, 2 * i + 1, 2 * j));
                m = std::max(m, input.at(c, 2 * i + 1, 2 * j + 1));
                out.at(c, i, j) = m;
            }
    return out;
}

/// y = x W + b by direct summation.
inline pcnn::Tensor linear_direct(const pcnn::Tensor& x, const pcnn::Tensor& w, const pcnn::Tensor& b) {
    const std::size_t batch = x.dim(0), in = x.dim(1), out_n = w.dim(1);
    pcnn::Tensor y({batch, out_n});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < out_n; ++j) {
            double acc = b.size() ? b.at(j) : 0.0;
            for (std::size_t k = 0; k < in; ++k) acc += x.at(i, k) * w.at(k, j);
            y.at(i, j) = acc;
        }
    return y;
}

/// Central finite difference of a scalar function at coordinate i of v.
inline double central_diff(std::vector<double>& v, std::size_t i, double step,
                           const std::function<double()>& f) {
    const double keep = v[i];
    v[i] = keep + step;
    const double hi = f();
    v[i] = keep - step;
    const double lo = f();
    v[i] = keep;
    return (hi - lo) / (2.0 * step);
}

inline double rel_err(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-12});
    return std::abs(got - want) / denom;
}

} // namespace oracle
