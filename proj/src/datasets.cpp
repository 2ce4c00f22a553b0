#include "pcnn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "pcnn/rng.hpp"

namespace pcnn {

namespace fs = std::filesystem;

Image ImageDataset::image(std::size_t i) const {
    const std::size_t h = images.dim(2), w = images.dim(3);
    Image img(h, w);
    const double* src = images.data() + i * 3 * h * w;
    std::copy(src, src + 3 * h * w, img.data.begin());
    return img;
}

ImageDataset load_cifar_bin(const std::string& path, std::size_t limit) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    is.seekg(0, std::ios::end);
    const std::size_t bytes = std::size_t(is.tellg());
    is.seekg(0);
    constexpr std::size_t kRecord = 3073;
    if (bytes % kRecord != 0) throw DataError(path + " is not a CIFAR-10 binary file (size % 3073 != 0)");
    std::size_t n = bytes / kRecord;
    if (limit > 0) n = std::min(n, limit);
    ImageDataset ds;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    std::vector<unsigned char> rec(kRecord);
    for (std::size_t i = 0; i < n; ++i) {
        is.read(reinterpret_cast<char*>(rec.data()), kRecord);
        if (!is) throw DataError("truncated CIFAR record in " + path);
        if (rec[0] > 9) throw DataError("CIFAR label byte out of range");
        ds.labels[i] = rec[0];
        double* dst = ds.images.data() + i * 3072;
        for (std::size_t t = 0; t < 3072; ++t) dst[t] = rec[1 + t] / 255.0;
    }
    return ds;
}

void save_cifar_bin(const std::string& path, const ImageDataset& ds) {
    if (ds.images.dim(2) != 32 || ds.images.dim(3) != 32)
        throw DataError("CIFAR binary format requires 32x32 images");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    std::vector<unsigned char> rec(3073);
    for (std::size_t i = 0; i < ds.count(); ++i) {
        rec[0] = static_cast<unsigned char>(ds.labels[i]);
        const double* src = ds.images.data() + i * 3072;
        for (std::size_t t = 0; t < 3072; ++t)
            rec[1 + t] = static_cast<unsigned char>(std::lround(std::clamp(src[t], 0.0, 1.0) * 255.0));
        os.write(reinterpret_cast<const char*>(rec.data()), 3073);
    }
    if (!os) throw DataError("write failed: " + path);
}

ImageDataset load_ppm_dir(const std::string& dir) {
    std::ifstream lf(fs::path(dir) / "labels.txt");
    if (!lf) throw DataError("missing labels.txt in " + dir);
    std::vector<std::pair<std::string, int>> entries;
    std::string name;
    int label;
    while (lf >> name >> label) entries.emplace_back(name, label);
    if (entries.empty()) throw DataError("labels.txt in " + dir + " is empty");
    ImageDataset ds;
    ds.labels.reserve(entries.size());
    int max_label = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Image img = read_ppm((fs::path(dir) / entries[i].first).string());
        if (i == 0) ds.images = Tensor({entries.size(), 3, img.height, img.width});
        if (3 * img.height * img.width != ds.images.size() / entries.size())
            throw DataError("images in " + dir + " have mixed sizes");
        std::copy(img.data.begin(), img.data.end(), ds.images.data() + i * img.data.size());
        ds.labels.push_back(entries[i].second);
        max_label = std::max(max_label, entries[i].second);
    }
    ds.classes = std::size_t(max_label) + 1;
    return ds;
}

void save_ppm_dir(const std::string& dir, const ImageDataset& ds) {
    fs::create_directories(dir);
    std::ofstream lf(fs::path(dir) / "labels.txt");
    for (std::size_t i = 0; i < ds.count(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img%06zu.ppm", i);
        write_ppm((fs::path(dir) / name).string(), ds.image(i));
        lf << name << " " << ds.labels[i] << "\n";
    }
}

ImageDataset make_synthetic_corpus(std::size_t n, std::size_t classes, std::size_t size, std::uint64_t seed) {
    if (classes == 0 || n == 0) throw ConfigError("corpus needs classes >= 1 and n >= 1");
    // class templates: sums of a few random plane waves per channel
    struct Wave {
        double fy, fx, phase, amp;
    };
    std::vector<std::vector<Wave>> waves(classes * 3);
    for (std::size_t k = 0; k < classes; ++k) {
        Rng rng = Rng::stream(seed, "corpus.template", k);
        for (std::size_t c = 0; c < 3; ++c) {
            auto& wl = waves[k * 3 + c];
            for (int j = 0; j < 4; ++j)
                wl.push_back({rng.uniform(0.5, 3.5), rng.uniform(0.5, 3.5), rng.uniform(0.0, 6.2831853),
                              rng.uniform(0.08, 0.22)});
        }
    }
    auto template_at = [&](std::size_t k, std::size_t c, double y, double x) {
        double v = 0.5;
        for (const Wave& wv : waves[k * 3 + c])
            v += wv.amp * std::sin(6.2831853 * (wv.fy * y + wv.fx * x) + wv.phase);
        return v;
    };
    ImageDataset ds;
    ds.classes = classes;
    ds.images = Tensor({n, 3, size, size});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::stream(seed, "corpus.sample", i);
        const std::size_t k = i % classes; // balanced
        ds.labels[i] = int(k);
        const double contrast = rng.uniform(0.6, 1.2);
        const double bright = rng.uniform(-0.08, 0.08);
        const double shift_y = rng.uniform(-0.1, 0.1), shift_x = rng.uniform(-0.1, 0.1);
        double* dst = ds.images.data() + i * 3 * size * size;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x) {
                    const double ty = double(y) / double(size) + shift_y;
                    const double tx = double(x) / double(size) + shift_x;
                    double v = 0.5 + contrast * (template_at(k, c, ty, tx) - 0.5) + bright;
                    v += rng.normal(0.0, 0.05);
                    dst[(c * size + y) * size + x] = std::clamp(v, 0.0, 1.0);
                }
    }
    return ds;
}

ImageDataset subset(const ImageDataset& ds, std::size_t n) {
    n = std::min(n, ds.count());
    ImageDataset out;
    out.classes = ds.classes;
    const std::size_t item = ds.images.size() / ds.count();
    out.images = Tensor({n, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + long(n));
    std::copy(ds.images.data(), ds.images.data() + n * item, out.images.data());
    return out;
}

} // namespace pcnn
