#include "pcnn/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pcnn {

double Image::at_edge(std::size_t c, long y, long x) const {
    const long yy = std::clamp(y, 0L, long(height) - 1);
    const long xx = std::clamp(x, 0L, long(width) - 1);
    return at(c, std::size_t(yy), std::size_t(xx));
}

double Image::sample(std::size_t c, double y, double x) const {
    const double yf = std::floor(y), xf = std::floor(x);
    const long y0 = long(yf), x0 = long(xf);
    const double fy = y - yf, fx = x - xf;
    const double v00 = at_edge(c, y0, x0), v01 = at_edge(c, y0, x0 + 1);
    const double v10 = at_edge(c, y0 + 1, x0), v11 = at_edge(c, y0 + 1, x0 + 1);
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
}

void Image::clamp01() {
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
}

Tensor Image::to_tensor() const { return Tensor({3, height, width}, data); }

Image Image::from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3) throw DimError("image tensor must be [3,H,W]");
    Image img(t.dim(1), t.dim(2));
    std::copy(t.data(), t.data() + t.size(), img.data.begin());
    return img;
}

Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw DataError(path + " is not a binary PPM (P6)");
    auto next_int = [&is, &path]() {
        // skip whitespace and # comments
        int c = is.get();
        while (c == '#' || std::isspace(c)) {
            if (c == '#')
                while (c != '\n' && c != EOF) c = is.get();
            c = is.get();
        }
        long v = 0;
        bool any = false;
        while (std::isdigit(c)) {
            v = v * 10 + (c - '0');
            any = true;
            c = is.get();
        }
        if (!any) throw DataError("malformed PPM header in " + path);
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval != 255) throw DataError("unsupported PPM header in " + path);
    // next_int consumed exactly one whitespace byte after maxval
    std::vector<unsigned char> raw(std::size_t(w) * std::size_t(h) * 3);
    is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!is) throw DataError("truncated PPM payload in " + path);
    Image img{std::size_t(h), std::size_t(w)};
    std::size_t i = 0;
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(c, std::size_t(y), std::size_t(x)) = raw[i++] / 255.0;
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.width * img.height * 3);
    std::size_t i = 0;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                raw[i++] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    os.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!os) throw DataError("write failed: " + path);
}

double psnr(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) throw DimError("psnr: image sizes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse == 0.0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace pcnn
