#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcnn/common.hpp"
#include "pcnn/tensor.hpp"

namespace pcnn {

/// RGB image, values in [0,1], planar channel-major storage so a [3,H,W]
/// tensor view is a straight copy. On disk: 8-bit binary PPM (P6).
struct Image {
    std::size_t height = 0, width = 0;
    std::vector<double> data; // [3][H][W]

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), data(3 * h * w, 0.0) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

    /// Edge-replicated access for out-of-frame coordinates.
    double at_edge(std::size_t c, long y, long x) const;

    /// Bilinear sample with edge replication; exact at integral coordinates.
    double sample(std::size_t c, double y, double x) const;

    void clamp01();
    bool operator==(const Image& other) const = default;

    Tensor to_tensor() const; // [3,H,W]
    static Image from_tensor(const Tensor& t);
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

/// Peak signal-to-noise ratio in dB on the [0,1] scale.
double psnr(const Image& a, const Image& b);

} // namespace pcnn
