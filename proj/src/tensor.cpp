#include "pcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pcnn {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    for (std::size_t d : shape_)
        if (d == 0) throw DimError("zero-sized dimension in shape " + shape_str(shape_));
    data_.assign(shape_product(shape_), 0.0);
    init_strides();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_))
        throw DimError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
    init_strides();
}

void Tensor::init_strides() {
    strides_.assign(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;)
        strides_[i - 1] = strides_[i] * shape_[i];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other)) throw DimError("operator+=: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    if (!same_shape(other)) throw DimError("operator-=: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::random_normal(std::vector<std::size_t> shape, Rng& rng, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(mean, stddev);
    return t;
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t d : shape) p *= d;
    return p;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated PCT1 stream");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

} // namespace

void write_pct_stream(std::ostream& os, const Tensor& t) {
    os.write("PCT1", 4);
    put_u32(os, std::uint32_t(t.rank()));
    for (std::size_t d : t.shape()) put_u32(os, std::uint32_t(d));
    std::vector<float> payload(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) payload[i] = float(t[i]);
    // f32 little-endian; this build targets LE hosts only
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size() * 4));
}

Tensor read_pct_stream(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PCT1", 4) != 0) throw DataError("bad PCT1 magic");
    std::uint32_t rank = get_u32(is);
    if (rank > 16) throw DataError("implausible PCT1 rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_u32(is);
    std::size_t n = shape_product(shape);
    std::vector<float> payload(n);
    is.read(reinterpret_cast<char*>(payload.data()), std::streamsize(n * 4));
    if (!is) throw DataError("truncated PCT1 payload");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = double(payload[i]);
    return Tensor(std::move(shape), std::move(data));
}

void write_pct(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    write_pct_stream(os, t);
    if (!os) throw DataError("write failed: " + path);
}

Tensor read_pct(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    return read_pct_stream(is);
}

} // namespace pcnn
