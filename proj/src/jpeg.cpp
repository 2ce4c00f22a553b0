#include <algorithm>
#include <cmath>
#include <vector>

#include "pcnn/deform.hpp"

// The lossy core of baseline JPEG: color transform, 2x2 chroma down-sampling,
// 8x8 block DCT, quantization against the Annex K tables with the conventional
// quality scaling, then the full inverse. Entropy coding is lossless and
// omitted; only the pixel damage matters here.

namespace pcnn {

namespace {

constexpr int kLumaQ[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                            14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                            18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                            49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kChromaQ[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                              24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                              99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                              99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct Dct8 {
    double c[8][8]; // orthonormal DCT-II basis
    Dct8() {
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x)
                c[u][x] = std::sqrt(u == 0 ? 1.0 / 8.0 : 2.0 / 8.0) *
                          std::cos((2.0 * x + 1.0) * u * 3.14159265358979323846 / 16.0);
    }
};

const Dct8 kDct;

void dct_block(const double in[64], double out[64]) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += kDct.c[u][y] * in[y * 8 + x];
            tmp[u * 8 + x] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += kDct.c[v][x] * tmp[u * 8 + x];
            out[u * 8 + v] = s;
        }
}

void idct_block(const double in[64], double out[64]) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += kDct.c[v][x] * in[u * 8 + v];
            tmp[u * 8 + x] = s;
        }
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += kDct.c[u][y] * tmp[u * 8 + x];
            out[y * 8 + x] = s;
        }
}

void scale_table(const int* base, int quality, double out[64]) {
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i) {
        int q = (base[i] * scale + 50) / 100;
        out[i] = double(std::clamp(q, 1, 255));
    }
}

// quantize/dequantize every 8x8 block of a plane (dims multiples of 8)
void crush_plane(std::vector<double>& plane, std::size_t h, std::size_t w, const double q[64]) {
    double block[64], coef[64];
    for (std::size_t by = 0; by < h; by += 8)
        for (std::size_t bx = 0; bx < w; bx += 8) {
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) block[y * 8 + x] = plane[(by + y) * w + bx + x] - 128.0;
            dct_block(block, coef);
            for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / q[i]) * q[i];
            idct_block(coef, block);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) plane[(by + y) * w + bx + x] = block[y * 8 + x] + 128.0;
        }
}

} // namespace

Image jpeg_like_compress(const Image& img, int quality) {
    if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1, 100]");
    const std::size_t h = img.height, w = img.width;
    const std::size_t ph = (h + 15) / 16 * 16, pw = (w + 15) / 16 * 16;

    std::vector<double> yp(ph * pw), cb(ph * pw), cr(ph * pw);
    for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t sy = std::min(y, h - 1), sx = std::min(x, w - 1);
            const double r = img.at(0, sy, sx) * 255.0;
            const double g = img.at(1, sy, sx) * 255.0;
            const double b = img.at(2, sy, sx) * 255.0;
            yp[y * pw + x] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb[y * pw + x] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
            cr[y * pw + x] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        }

    // 2x2 average chroma down-sampling
    const std::size_t ch2 = ph / 2, cw2 = pw / 2;
    std::vector<double> cb2(ch2 * cw2), cr2(ch2 * cw2);
    for (std::size_t y = 0; y < ch2; ++y)
        for (std::size_t x = 0; x < cw2; ++x) {
            const std::size_t p = 2 * y * pw + 2 * x;
            cb2[y * cw2 + x] = 0.25 * (cb[p] + cb[p + 1] + cb[p + pw] + cb[p + pw + 1]);
            cr2[y * cw2 + x] = 0.25 * (cr[p] + cr[p + 1] + cr[p + pw] + cr[p + pw + 1]);
        }

    double lq[64], cq[64];
    scale_table(kLumaQ, quality, lq);
    scale_table(kChromaQ, quality, cq);
    crush_plane(yp, ph, pw, lq);
    crush_plane(cb2, ch2, cw2, cq);
    crush_plane(cr2, ch2, cw2, cq);

    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double yy = yp[y * pw + x];
            const double cbv = cb2[(y / 2) * cw2 + x / 2] - 128.0;
            const double crv = cr2[(y / 2) * cw2 + x / 2] - 128.0;
            out.at(0, y, x) = (yy + 1.402 * crv) / 255.0;
            out.at(1, y, x) = (yy - 0.344136 * cbv - 0.714136 * crv) / 255.0;
            out.at(2, y, x) = (yy + 1.772 * cbv) / 255.0;
        }
    out.clamp01();
    return out;
}

} // namespace pcnn
