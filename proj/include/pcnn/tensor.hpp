#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcnn/common.hpp"
#include "pcnn/rng.hpp"

namespace pcnn {

/// Dense row-major N-dimensional array of doubles. The single value carrier of
/// the engine: features, kernels, gradients all live here. Storage is 64-bit
/// internally; the on-disk format (PCT1) is 32-bit.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::initializer_list<std::size_t> shape) : Tensor(std::vector<std::size_t>(shape)) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i0) { return data_[i0]; }
    double& at(std::size_t i0, std::size_t i1) { return data_[i0 * strides_[0] + i1]; }
    double& at(std::size_t i0, std::size_t i1, std::size_t i2) {
        return data_[i0 * strides_[0] + i1 * strides_[1] + i2];
    }
    double& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
        return data_[i0 * strides_[0] + i1 * strides_[1] + i2 * strides_[2] + i3];
    }
    double at(std::size_t i0) const { return data_[i0]; }
    double at(std::size_t i0, std::size_t i1) const { return data_[i0 * strides_[0] + i1]; }
    double at(std::size_t i0, std::size_t i1, std::size_t i2) const {
        return data_[i0 * strides_[0] + i1 * strides_[1] + i2];
    }
    double at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) const {
        return data_[i0 * strides_[0] + i1 * strides_[1] + i2 * strides_[2] + i3];
    }

    void fill(double v);
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Elementwise in-place updates (shapes must match).
    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    double sum() const;
    double max_abs() const;
    bool all_finite() const;

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo = 0.0, double hi = 1.0);
    static Tensor random_normal(std::vector<std::size_t> shape, Rng& rng, double mean = 0.0, double stddev = 1.0);

private:
    void init_strides();

    std::vector<std::size_t> shape_;
    std::vector<std::size_t> strides_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// PCT1 tensor file: "PCT1" magic, u32-LE rank, rank u32-LE dims,
/// then f32-LE payload in row-major order.
void write_pct(const std::string& path, const Tensor& t);
Tensor read_pct(const std::string& path);
void write_pct_stream(std::ostream& os, const Tensor& t);
Tensor read_pct_stream(std::istream& is);

} // namespace pcnn
