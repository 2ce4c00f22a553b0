#pragma once

#include <cstddef>
#include <vector>

namespace pcnn {

/// C[M x N] = A[M x K] * B[K x N], all row-major, C overwritten.
///
/// Accumulation per output element is strictly k-sequential (saxpy over rows
/// of B), so results are bit-identical for any row subset of A. Training-path
/// reproducibility relies on this: a grouped convolution that processes a
/// slice of output channels produces exactly the bytes the full call would.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

/// C += A * B, same contract as gemm().
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

/// Row-major transpose: out[N x M] from in[M x N].
void transpose(const double* in, double* out, std::size_t m, std::size_t n);

} // namespace pcnn
