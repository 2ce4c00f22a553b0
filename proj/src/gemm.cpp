#include "pcnn/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace pcnn {

namespace {

// Four-row micro-kernel: amortizes the streaming of B rows over four output
// rows. Inner loops are over contiguous columns of B/C and carry no reduction,
// so they vectorize without reassociation; each C element still accumulates in
// k order.
void gemm_block4(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                 std::size_t lda) {
    const double* a0 = a;
    const double* a1 = a + lda;
    const double* a2 = a + 2 * lda;
    const double* a3 = a + 3 * lda;
    double* c0 = c;
    double* c1 = c + n;
    double* c2 = c + 2 * n;
    double* c3 = c + 3 * n;
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
        for (std::size_t j = 0; j < n; ++j) {
            const double bj = brow[j];
            c0[j] += v0 * bj;
            c1[j] += v1 * bj;
            c2[j] += v2 * bj;
            c3[j] += v3 * bj;
        }
    }
}

void gemm_block1(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double v = a[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += v * brow[j];
    }
}

} // namespace

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) gemm_block4(a + i * k, b, c + i * n, k, n, k);
    for (; i < m; ++i) gemm_block1(a + i * k, b, c + i * n, k, n);
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    std::fill(c, c + m * n, 0.0);
    gemm_acc(a, b, c, m, k, n);
}

void transpose(const double* in, double* out, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
}

} // namespace pcnn
