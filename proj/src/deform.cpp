#include "pcnn/deform.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "pcnn/rng.hpp"

namespace pcnn {

std::string deform_kind_name(DeformKind k) {
    switch (k) {
    case DeformKind::Rotation: return "rotation";
    case DeformKind::Perspective: return "perspective";
    case DeformKind::Blur: return "blur";
    case DeformKind::JpegLike: return "jpeg";
    case DeformKind::SaltPepper: return "salt_pepper";
    case DeformKind::RandomNoise: return "random_noise";
    case DeformKind::StructuredNoise: return "structured_noise";
    case DeformKind::InPaint: return "inpaint";
    case DeformKind::PatchOcclude: return "patch_occlude";
    default: return "targeted_occlude";
    }
}

DeformKind deform_kind_from(const std::string& name) {
    static const std::map<std::string, DeformKind> table{
        {"rotation", DeformKind::Rotation},         {"perspective", DeformKind::Perspective},
        {"blur", DeformKind::Blur},                 {"jpeg", DeformKind::JpegLike},
        {"salt_pepper", DeformKind::SaltPepper},    {"random_noise", DeformKind::RandomNoise},
        {"structured_noise", DeformKind::StructuredNoise}, {"inpaint", DeformKind::InPaint},
        {"patch_occlude", DeformKind::PatchOcclude}, {"targeted_occlude", DeformKind::TargetedOcclude}};
    auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown deformation '" + name + "'");
    return it->second;
}

std::string DeformSpec::to_string() const {
    std::ostringstream os;
    os << deform_kind_name(kind);
    switch (kind) {
    case DeformKind::Rotation: os << " angle=" << angle; break;
    case DeformKind::Perspective: os << " displacement=" << displacement; break;
    case DeformKind::Blur: os << " sigma=" << sigma; break;
    case DeformKind::JpegLike: os << " quality=" << quality; break;
    case DeformKind::SaltPepper: os << " rate=" << rate << " drop_sigma=" << drop_sigma; break;
    case DeformKind::RandomNoise:
    case DeformKind::StructuredNoise: os << " noise_sigma=" << noise_sigma; break;
    case DeformKind::InPaint: os << " transparency=" << transparency; break;
    case DeformKind::PatchOcclude: os << " patch_fraction=" << patch_fraction; break;
    case DeformKind::TargetedOcclude:
        os << " mask=" << mask << " clusters=" << clusters << " cluster_radius=" << cluster_radius;
        break;
    }
    os << " seed=" << seed;
    return os.str();
}

DeformSpec DeformSpec::parse(const std::string& text) {
    std::istringstream is(text);
    std::string kind_name;
    is >> kind_name;
    DeformSpec spec;
    spec.kind = deform_kind_from(kind_name);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ConfigError("bad deform field '" + tok + "'");
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "angle") spec.angle = std::stod(val);
        else if (key == "displacement") spec.displacement = std::stod(val);
        else if (key == "sigma") spec.sigma = std::stod(val);
        else if (key == "quality") spec.quality = std::stoi(val);
        else if (key == "rate") spec.rate = std::stod(val);
        else if (key == "drop_sigma") spec.drop_sigma = std::stod(val);
        else if (key == "noise_sigma") spec.noise_sigma = std::stod(val);
        else if (key == "transparency") spec.transparency = std::stod(val);
        else if (key == "patch_fraction") spec.patch_fraction = std::stod(val);
        else if (key == "mask") spec.mask = val;
        else if (key == "clusters") spec.clusters = std::stoi(val);
        else if (key == "cluster_radius") spec.cluster_radius = std::stoi(val);
        else if (key == "seed") spec.seed = std::stoull(val);
        else throw ConfigError("unknown deform field '" + key + "'");
    }
    return spec;
}

// ------------------------------------------------------------------ rotate

Image rotate(const Image& img, double angle_deg) {
    if (std::abs(angle_deg) > 15.0 + 1e-12)
        throw ConfigError("rotation angle " + std::to_string(angle_deg) + " outside [-15, 15]");
    const double th = angle_deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double cy = (double(img.height) - 1.0) / 2.0, cx = (double(img.width) - 1.0) / 2.0;
    Image out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const double dy = double(y) - cy, dx = double(x) - cx;
            const double sy = cy + c * dy - s * dx;
            const double sx = cx + s * dy + c * dx;
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(ch, y, x) = img.sample(ch, sy, sx);
        }
    out.clamp01();
    return out;
}

// ------------------------------------------------------------- perspective

namespace {

// homography fitting src -> dst, 8-unknown DLT, Gauss elimination with
// partial pivoting; returns false when the system is singular
bool fit_homography(const std::array<std::array<double, 2>, 4>& src, const std::array<std::array<double, 2>, 4>& dst,
                    std::array<double, 8>& h) {
    double a[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        const double x = src[i][1], y = src[i][0];
        const double u = dst[i][1], v = dst[i][0];
        double* r0 = a[2 * i];
        double* r1 = a[2 * i + 1];
        r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
        r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
    }
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12) return false;
        if (piv != col)
            for (int k = 0; k < 9; ++k) std::swap(a[piv][k], a[col][k]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (int k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
        }
    }
    for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
    return true;
}

bool collinear_triple_exists(const std::array<std::array<double, 2>, 4>& p, double extent) {
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            for (int k = j + 1; k < 4; ++k) {
                const double cross = (p[j][1] - p[i][1]) * (p[k][0] - p[i][0]) -
                                     (p[j][0] - p[i][0]) * (p[k][1] - p[i][1]);
                if (std::abs(cross) < 1e-3 * extent * extent) return true;
            }
    return false;
}

} // namespace

Image perspective_warp_to(const Image& img, const std::array<std::array<double, 2>, 4>& base_points) {
    const double hmax = double(img.height) - 1.0, wmax = double(img.width) - 1.0;
    const std::array<std::array<double, 2>, 4> corners{{{0, 0}, {0, wmax}, {hmax, wmax}, {hmax, 0}}};
    // inverse warp: fit base -> corner, sample the input there
    std::array<double, 8> h{};
    if (!fit_homography(base_points, corners, h)) throw ConfigError("degenerate base pixels for perspective warp");
    Image out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const double w = h[6] * double(x) + h[7] * double(y) + 1.0;
            const double sx = (h[0] * double(x) + h[1] * double(y) + h[2]) / w;
            const double sy = (h[3] * double(x) + h[4] * double(y) + h[5]) / w;
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(ch, y, x) = img.sample(ch, sy, sx);
        }
    out.clamp01();
    return out;
}

Image perspective_warp(const Image& img, std::uint64_t seed, double displacement_bound) {
    const double hmax = double(img.height) - 1.0, wmax = double(img.width) - 1.0;
    const std::array<std::array<double, 2>, 4> corners{{{0, 0}, {0, wmax}, {hmax, wmax}, {hmax, 0}}};
    Rng rng = Rng::stream(seed, "perspective");
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::array<std::array<double, 2>, 4> base{};
        for (int i = 0; i < 4; ++i) {
            base[i][0] = std::clamp(corners[i][0] + rng.uniform(-1.0, 1.0) * displacement_bound * hmax, 0.0, hmax);
            base[i][1] = std::clamp(corners[i][1] + rng.uniform(-1.0, 1.0) * displacement_bound * wmax, 0.0, wmax);
        }
        if (collinear_triple_exists(base, std::max(hmax, wmax))) continue;
        return perspective_warp_to(img, base);
    }
    throw ConfigError("could not draw non-degenerate base pixels in 8 attempts");
}

// ------------------------------------------------------------------- blur

Image gaussian_blur(const Image& img, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("blur sigma must be > 0");
    double k[5][5];
    double total = 0.0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            const double d2 = double((i - 2) * (i - 2) + (j - 2) * (j - 2));
            k[i][j] = std::exp(-d2 / (2.0 * sigma * sigma));
            total += k[i][j];
        }
    for (auto& row : k)
        for (double& v : row) v /= total;
    Image out(img.height, img.width);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int i = 0; i < 5; ++i)
                    for (int j = 0; j < 5; ++j)
                        acc += k[i][j] * img.at_edge(ch, long(y) + i - 2, long(x) + j - 2);
                out.at(ch, y, x) = acc;
            }
    out.clamp01();
    return out;
}

// ---------------------------------------------------------------- noises

Image salt_pepper(const Image& img, double rate, double drop_sigma, std::uint64_t seed) {
    if (rate < 0.0 || rate > 0.2 + 1e-12) throw ConfigError("salt & pepper rate must be in [0, 0.2]");
    Image out = img;
    const std::size_t n = img.height * img.width;
    const std::size_t count = std::size_t(std::llround(rate * double(n)));
    if (count == 0) return out;
    Rng rng = Rng::stream(seed, "salt_pepper");
    // partial Fisher-Yates: first `count` entries become the selection
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + std::size_t(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t y = idx[i] / img.width, x = idx[i] % img.width;
        for (std::size_t ch = 0; ch < 3; ++ch)
            out.at(ch, y, x) = std::clamp(0.5 + rng.normal(0.0, drop_sigma), 0.0, 1.0);
    }
    return out;
}

Image random_noise(const Image& img, double sigma, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
    Rng rng = Rng::stream(seed, "random_noise");
    Image out = img;
    for (double& v : out.data) v = std::clamp(v + rng.laplace(sigma), 0.0, 1.0);
    return out;
}

Image structured_noise(const Image& img, double sigma, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw ConfigError("noise sigma must be > 0");
    Rng rng = Rng::stream(seed, "structured_noise");
    Image out = img;
    for (std::size_t y = 0; y < img.height; y += 2)
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t x = 0; x < img.width; ++x)
                out.at(ch, y, x) = std::clamp(out.at(ch, y, x) + rng.laplace(sigma), 0.0, 1.0);
    return out;
}

// --------------------------------------------------------------- inpaint

namespace {

// 5x7 glyphs, one byte per row, bit 4 = leftmost column
constexpr unsigned char kFont[36][7] = {
    {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
    {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},
    {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
    {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
    {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F}, {0x1F, 0x01, 0x02, 0x06, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}};

// paints one glyph onto the layer+mask; returns pixels newly covered
std::size_t paint_glyph(std::vector<double>& layer, std::vector<char>& mask, std::size_t h, std::size_t w,
                        int glyph, long y0, long x0, int scale, double r, double g, double b) {
    std::size_t painted = 0;
    for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col) {
            if (!((kFont[glyph][row] >> (4 - col)) & 1)) continue;
            for (int sy = 0; sy < scale; ++sy)
                for (int sx = 0; sx < scale; ++sx) {
                    const long y = y0 + row * scale + sy, x = x0 + col * scale + sx;
                    if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) continue;
                    const std::size_t p = std::size_t(y) * w + std::size_t(x);
                    if (!mask[p]) {
                        mask[p] = 1;
                        ++painted;
                    }
                    layer[p] = r;
                    layer[h * w + p] = g;
                    layer[2 * h * w + p] = b;
                }
        }
    return painted;
}

} // namespace

Image inpaint_strings(const Image& img, double transparency, std::uint64_t seed, double coverage_lo,
                      double coverage_hi) {
    if (transparency < 0.0 || transparency > 1.0) throw ConfigError("transparency must be in [0,1]");
    if (transparency == 1.0) return img; // fully transparent overlay
    Rng rng = Rng::stream(seed, "inpaint");
    const std::size_t h = img.height, w = img.width, hw = h * w;
    std::vector<double> layer(3 * hw, 0.0);
    std::vector<char> mask(hw, 0);
    std::size_t covered = 0;
    const int max_scale = std::max(1, std::min(3, int(w) / 32));
    for (int guard = 0; guard < 4096 && double(covered) / double(hw) < coverage_lo; ++guard) {
        const int len = rng.range_int(4, 10);
        const int scale = rng.range_int(1, max_scale);
        const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
        const long span = long(len) * 6 * scale;
        const long y0 = long(rng.below(std::max<std::uint64_t>(1, h))) - 3 * scale;
        long x0 = long(rng.below(std::max<std::uint64_t>(1, w + std::size_t(span)))) - span;
        for (int ch = 0; ch < len; ++ch) {
            // stop before a glyph that would push coverage past the band
            if (double(covered + std::size_t(35 * scale * scale)) / double(hw) > coverage_hi) break;
            covered += paint_glyph(layer, mask, h, w, rng.range_int(0, 35), y0, x0, scale, r, g, b);
            x0 += 6 * scale;
            if (double(covered) / double(hw) >= coverage_lo) break;
        }
    }
    Image out = img;
    for (std::size_t p = 0; p < hw; ++p) {
        if (!mask[p]) continue;
        for (std::size_t ch = 0; ch < 3; ++ch)
            out.data[ch * hw + p] = (1.0 - transparency) * layer[ch * hw + p] + transparency * img.data[ch * hw + p];
    }
    out.clamp01();
    return out;
}

// ---------------------------------------------------------- patch occlude

Image patch_occlude(const Image& img, const std::vector<Image>& donors, double fraction, std::uint64_t seed) {
    if (donors.empty()) throw ConfigError("patch occlusion needs at least one donor image");
    if (fraction < 1.0 / 64.0 - 1e-12 || fraction > 1.0) throw ConfigError("patch fraction must be in [1/64, 1]");
    Rng rng = Rng::stream(seed, "patch");
    const Image& donor = donors[rng.below(donors.size())];

    // donor crop: at least a quarter of each extent
    const std::size_t cw = std::max<std::size_t>(2, donor.width / 4 + rng.below(std::max<std::uint64_t>(1, donor.width - donor.width / 4)));
    const std::size_t chh = std::max<std::size_t>(2, donor.height / 4 + rng.below(std::max<std::uint64_t>(1, donor.height - donor.height / 4)));
    const std::size_t cx = rng.below(donor.width - cw + 1);
    const std::size_t cy = rng.below(donor.height - chh + 1);

    // target rectangle with area >= fraction of the frame
    std::size_t rw, rh;
    if (fraction >= 1.0) {
        rw = img.width;
        rh = img.height;
    } else {
        const double area = rng.uniform(fraction, std::min(1.0, 2.0 * fraction)) * double(img.height * img.width);
        const double aspect = rng.uniform(0.7, 1.4);
        rw = std::min(img.width, std::size_t(std::ceil(std::sqrt(area * aspect))));
        rh = std::min(img.height, std::size_t(std::ceil(area / double(rw))));
        while (rw * rh < std::size_t(std::ceil(fraction * double(img.height * img.width)))) {
            if (rw < img.width)
                ++rw;
            else if (rh < img.height)
                ++rh;
            else
                break;
        }
    }
    const std::size_t ty = rng.below(img.height - rh + 1);
    const std::size_t tx = rng.below(img.width - rw + 1);

    Image out = img;
    for (std::size_t y = 0; y < rh; ++y)
        for (std::size_t x = 0; x < rw; ++x) {
            // map into the donor crop (bilinear rescale)
            const double sy = double(cy) + (rh > 1 ? double(y) * double(chh - 1) / double(rh - 1) : 0.0);
            const double sx = double(cx) + (rw > 1 ? double(x) * double(cw - 1) / double(rw - 1) : 0.0);
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(ch, ty + y, tx + x) = donor.sample(ch, sy, sx);
        }
    out.clamp01();
    return out;
}

// ------------------------------------------------------ saliency + occlude

Tensor saliency_map(Network& net, const Image& img, int class_id) {
    Tensor x({1, 3, img.height, img.width}, img.data);
    net.zero_grad();
    Tensor logits = net.forward(x, false);
    if (logits.rank() != 2 || logits.dim(0) != 1) throw DimError("saliency needs a [1, classes] head");
    if (class_id < 0 || std::size_t(class_id) >= logits.dim(1))
        throw DataError("class id " + std::to_string(class_id) + " out of range");
    Tensor seed_grad(logits.shape());
    seed_grad[std::size_t(class_id)] = 1.0;
    Tensor gx = net.backward(seed_grad);
    Tensor map({img.height, img.width});
    double mx = 0.0;
    const std::size_t hw = img.height * img.width;
    for (std::size_t p = 0; p < hw; ++p) {
        double m = 0.0;
        for (std::size_t c = 0; c < 3; ++c) m = std::max(m, std::abs(gx[c * hw + p]));
        map[p] = m;
        mx = std::max(mx, m);
    }
    if (mx > 0.0)
        for (std::size_t p = 0; p < hw; ++p) map[p] /= mx;
    return map;
}

Image targeted_occlude(const Image& img, const Tensor& saliency, const std::string& mask_type, int clusters,
                       int cluster_radius, std::uint64_t seed) {
    if (saliency.shape() != std::vector<std::size_t>{img.height, img.width})
        throw DimError("saliency map shape does not match the image");
    if (mask_type != "black" && mask_type != "noise") throw ConfigError("mask type must be black or noise");
    Image out = img;
    if (clusters <= 0) return out;
    Tensor work = saliency;
    Rng rng = Rng::stream(seed, "targeted");
    const long r = cluster_radius;
    std::vector<std::pair<long, long>> centers;
    for (int k = 0; k < clusters; ++k) {
        // greedy maximum with row-major tie break
        std::size_t best = 0;
        for (std::size_t p = 1; p < work.size(); ++p)
            if (work[p] > work[best]) best = p;
        if (work[best] <= 0.0) break;
        const long by = long(best / img.width), bx = long(best % img.width);
        centers.emplace_back(by, bx);
        for (long y = std::max(0L, by - r); y <= std::min(long(img.height) - 1, by + r); ++y)
            for (long x = std::max(0L, bx - r); x <= std::min(long(img.width) - 1, bx + r); ++x)
                if ((y - by) * (y - by) + (x - bx) * (x - bx) <= r * r)
                    work[std::size_t(y) * img.width + std::size_t(x)] = -1.0;
    }
    for (const auto& [by, bx] : centers)
        for (long y = std::max(0L, by - r); y <= std::min(long(img.height) - 1, by + r); ++y)
            for (long x = std::max(0L, bx - r); x <= std::min(long(img.width) - 1, bx + r); ++x) {
                if ((y - by) * (y - by) + (x - bx) * (x - bx) > r * r) continue;
                for (std::size_t ch = 0; ch < 3; ++ch)
                    out.at(ch, std::size_t(y), std::size_t(x)) = mask_type == "black" ? 0.0 : rng.uniform();
            }
    return out;
}

// ---------------------------------------------------------------- dispatch

Image apply_deform(const Image& img, const DeformSpec& spec, const std::vector<Image>* donors, Network* net,
                   int class_id) {
    switch (spec.kind) {
    case DeformKind::Rotation: return rotate(img, spec.angle);
    case DeformKind::Perspective: return perspective_warp(img, spec.seed, spec.displacement);
    case DeformKind::Blur: return gaussian_blur(img, spec.sigma);
    case DeformKind::JpegLike: return jpeg_like_compress(img, spec.quality);
    case DeformKind::SaltPepper: return salt_pepper(img, spec.rate, spec.drop_sigma, spec.seed);
    case DeformKind::RandomNoise: return random_noise(img, spec.noise_sigma, spec.seed);
    case DeformKind::StructuredNoise: return structured_noise(img, spec.noise_sigma, spec.seed);
    case DeformKind::InPaint: return inpaint_strings(img, spec.transparency, spec.seed);
    case DeformKind::PatchOcclude:
        if (!donors) throw ConfigError("patch occlusion needs donor images");
        return patch_occlude(img, *donors, spec.patch_fraction, spec.seed);
    case DeformKind::TargetedOcclude: {
        if (!net) throw ConfigError("targeted occlusion needs a model");
        Tensor sal = saliency_map(*net, img, class_id);
        return targeted_occlude(img, sal, spec.mask, spec.clusters, spec.cluster_radius, spec.seed);
    }
    }
    throw ConfigError("unhandled deformation kind");
}

std::vector<DeformSpec> mix_chain(const std::string& name, std::uint64_t seed) {
    auto stage = [seed](DeformKind k, int i) {
        DeformSpec s;
        s.kind = k;
        s.seed = mix64(seed + std::uint64_t(i));
        return s;
    };
    std::vector<DeformSpec> chain;
    if (name == "mix.light") {
        DeformSpec ip = stage(DeformKind::InPaint, 0);
        ip.transparency = 0.6;
        DeformSpec rn = stage(DeformKind::RandomNoise, 1);
        rn.noise_sigma = 0.06;
        chain = {ip, rn};
    } else if (name == "mix.heavy") {
        DeformSpec ip = stage(DeformKind::InPaint, 0);
        ip.transparency = 0.5;
        DeformSpec rn = stage(DeformKind::RandomNoise, 1);
        rn.noise_sigma = 0.1;
        DeformSpec sp = stage(DeformKind::SaltPepper, 2);
        sp.rate = 0.1;
        DeformSpec bl = stage(DeformKind::Blur, 3);
        bl.sigma = 1.0;
        DeformSpec jp = stage(DeformKind::JpegLike, 4);
        jp.quality = 30;
        chain = {ip, rn, sp, bl, jp};
    } else {
        throw ConfigError("unknown mix '" + name + "' (use mix.light or mix.heavy)");
    }
    return chain;
}

} // namespace pcnn
