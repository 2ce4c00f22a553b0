#include "doctest.h"

#include <cmath>

#include "pcnn/deform.hpp"
#include "pcnn/rng.hpp"

using namespace pcnn;

namespace {

// smooth synthetic stand-in for a natural image: one dominant luminance
// pattern with mild per-channel tinting, values well inside [0,1]
Image natural_image(std::size_t h, std::size_t w, std::uint64_t seed = 1) {
    Rng rng(seed);
    const double fy = rng.uniform(1.0, 3.0), fx = rng.uniform(1.0, 3.0), ph = rng.uniform(0.0, 6.28);
    Image img(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double base = 0.5 + 0.22 * std::sin(fy * 6.28 * double(y) / double(h) + ph) +
                                0.18 * std::cos(fx * 6.28 * double(x) / double(w) - ph);
            for (std::size_t c = 0; c < 3; ++c) {
                const double tint = 0.05 * std::sin(0.7 * 6.28 * double(x + y) / double(h + w) + double(c));
                img.at(c, y, x) = std::clamp(base + tint, 0.05, 0.95);
            }
        }
    return img;
}

std::size_t changed_pixels(const Image& a, const Image& b) {
    std::size_t n = 0;
    for (std::size_t p = 0; p < a.height * a.width; ++p) {
        const std::size_t hw = a.height * a.width;
        if (a.data[p] != b.data[p] || a.data[hw + p] != b.data[hw + p] || a.data[2 * hw + p] != b.data[2 * hw + p])
            ++n;
    }
    return n;
}

} // namespace

TEST_CASE("rotation: identity, constancy, and round trip") {
    Image img = natural_image(24, 32);
    Image zero = rotate(img, 0.0);
    CHECK(zero == img); // bit-exact no-op

    Image solid(16, 16);
    for (double& v : solid.data) v = 0.37;
    Image rs = rotate(solid, 12.0);
    for (double v : rs.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

    Image there = rotate(img, 10.0);
    Image back = rotate(there, -10.0);
    double mae = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) mae += std::abs(back.data[i] - img.data[i]);
    mae /= double(img.data.size());
    CHECK(mae < 0.05);

    CHECK_THROWS_AS(rotate(img, 20.0), ConfigError);
}

TEST_CASE("perspective: identity corners, determinism, marker tracking") {
    Image img = natural_image(20, 24, 2);
    const double hm = 19.0, wm = 23.0;
    Image ident = perspective_warp_to(img, {{{0, 0}, {0, wm}, {hm, wm}, {hm, 0}}});
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(ident.data[i] == doctest::Approx(img.data[i]).epsilon(1e-9));

    Image a = perspective_warp(img, 77, 0.15);
    Image b = perspective_warp(img, 77, 0.15);
    CHECK(a == b);

    // marker at the top-left corner should land on the base pixel: the warp
    // maps corner_i -> base_i, so the output at base_0 samples the marker
    Image marker(32, 32);
    marker.at(0, 0, 0) = marker.at(1, 0, 0) = marker.at(2, 0, 0) = 1.0;
    const std::array<std::array<double, 2>, 4> base{{{5, 6}, {0, 31}, {31, 31}, {31, 0}}};
    Image warped = perspective_warp_to(marker, base);
    CHECK(warped.at(0, 5, 6) > 0.9);
    // away from the landed marker (and from the replicated top-left edge
    // wedge) the image stays dark
    CHECK(warped.at(0, 20, 20) < 0.05);
    CHECK(warped.at(0, 5, 20) < 0.05);
}

TEST_CASE("blur: normalized kernel, energy, impulse response") {
    Image solid(12, 12);
    for (double& v : solid.data) v = 0.6;
    Image bs = gaussian_blur(solid, 1.0);
    for (double v : bs.data) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));

    Image img = natural_image(32, 32, 3);
    Image blurred = gaussian_blur(img, 1.2);
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t y = 4; y < 28; ++y)
        for (std::size_t x = 4; x < 28; ++x) {
            s0 += img.at(0, y, x);
            s1 += blurred.at(0, y, x);
        }
    CHECK(std::abs(s1 - s0) / s0 < 0.01);

    Image impulse(11, 11);
    impulse.at(0, 5, 5) = 1.0;
    Image resp = gaussian_blur(impulse, 0.8);
    // independent kernel computation
    double k[5][5], total = 0.0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            k[i][j] = std::exp(-double((i - 2) * (i - 2) + (j - 2) * (j - 2)) / (2 * 0.8 * 0.8));
            total += k[i][j];
        }
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(resp.at(0, std::size_t(3 + i), std::size_t(3 + j)) == doctest::Approx(k[i][j] / total).epsilon(1e-10));

    CHECK_THROWS_AS(gaussian_blur(img, 0.0), ConfigError);
}

TEST_CASE("jpeg: quality extremes and constant image") {
    Image img = natural_image(48, 48, 4);
    CHECK(psnr(jpeg_like_compress(img, 100), img) > 40.0);
    CHECK(psnr(jpeg_like_compress(img, 5), img) < 30.0);

    Image solid(16, 16);
    for (double& v : solid.data) v = 0.5;
    Image sq = jpeg_like_compress(solid, 10);
    for (std::size_t i = 0; i < sq.data.size(); ++i) CHECK(std::abs(sq.data[i] - 0.5) < 0.01);

    CHECK_THROWS_AS(jpeg_like_compress(img, 0), ConfigError);
    CHECK_THROWS_AS(jpeg_like_compress(img, 101), ConfigError);
}

TEST_CASE("salt and pepper: rate zero, exact fraction, locality") {
    Image img = natural_image(40, 40, 5);
    Image none = salt_pepper(img, 0.0, 0.5, 9);
    CHECK(none == img);

    Image hit = salt_pepper(img, 0.2, 0.5, 9);
    const double frac = double(changed_pixels(img, hit)) / double(40 * 40);
    CHECK(std::abs(frac - 0.2) < 0.005);

    // unselected pixels bit-equal: count of changed pixels already proves
    // the rest are identical, but verify a few untouched coordinates too
    std::size_t untouched = 0;
    const std::size_t hw = 40 * 40;
    for (std::size_t p = 0; p < hw; ++p)
        if (img.data[p] == hit.data[p] && img.data[hw + p] == hit.data[hw + p] &&
            img.data[2 * hw + p] == hit.data[2 * hw + p])
            ++untouched;
    CHECK(untouched == hw - changed_pixels(img, hit));

    CHECK_THROWS_AS(salt_pepper(img, 0.5, 0.5, 9), ConfigError);
    CHECK(salt_pepper(img, 0.2, 0.5, 9) == hit); // deterministic
}

TEST_CASE("random noise: symmetry and determinism") {
    Image img = natural_image(40, 40, 6);
    Image noisy = random_noise(img, 0.05, 11);
    double mean = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) mean += noisy.data[i] - img.data[i];
    mean /= double(img.data.size());
    CHECK(std::abs(mean) < 0.005);
    CHECK(random_noise(img, 0.05, 11) == noisy);
    CHECK_THROWS_AS(random_noise(img, 0.0, 11), ConfigError);
}

TEST_CASE("structured noise: odd rows untouched, even rows corrupted") {
    Image img = natural_image(21, 16, 7);
    Image noisy = structured_noise(img, 0.2, 13);
    for (std::size_t y = 1; y < img.height; y += 2)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t x = 0; x < img.width; ++x) CHECK(noisy.at(c, y, x) == img.at(c, y, x));
    std::size_t even_changed = 0;
    for (std::size_t y = 0; y < img.height; y += 2)
        for (std::size_t x = 0; x < img.width; ++x)
            if (noisy.at(0, y, x) != img.at(0, y, x)) ++even_changed;
    CHECK(double(even_changed) > 0.9 * double((img.height + 1) / 2 * img.width));

    Image strip(1, 8);
    for (double& v : strip.data) v = 0.5;
    Image sn = structured_noise(strip, 0.2, 13);
    std::size_t diff = 0;
    for (std::size_t i = 0; i < strip.data.size(); ++i)
        if (sn.data[i] != strip.data[i]) ++diff;
    CHECK(diff > 0); // row 0 is even: fully eligible
}

TEST_CASE("inpaint: transparency contract and coverage band") {
    Image img = natural_image(64, 64, 8);
    CHECK(inpaint_strings(img, 1.0, 17) == img);

    Image opaque = inpaint_strings(img, 0.0, 17);
    Image half = inpaint_strings(img, 0.5, 17);
    const std::size_t hw = 64 * 64;
    std::size_t covered = 0;
    for (std::size_t p = 0; p < hw; ++p) {
        bool hit = false;
        for (std::size_t c = 0; c < 3; ++c)
            if (opaque.data[c * hw + p] != img.data[c * hw + p]) hit = true;
        if (!hit) continue;
        ++covered;
        // same seed, half transparency: out = 0.5*glyph + 0.5*img
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(half.data[c * hw + p] ==
                  doctest::Approx(0.5 * opaque.data[c * hw + p] + 0.5 * img.data[c * hw + p]).epsilon(1e-12));
    }
    const double frac = double(covered) / double(hw);
    CHECK(frac >= 0.049);
    CHECK(frac <= 0.25);
    CHECK(inpaint_strings(img, 0.0, 17) == opaque); // deterministic
}

TEST_CASE("patch occlusion: full replacement, locality, area bound") {
    Image img = natural_image(32, 32, 9);
    std::vector<Image> donors{natural_image(40, 40, 100), natural_image(24, 24, 101)};

    Image full = patch_occlude(img, donors, 1.0, 23);
    CHECK(changed_pixels(img, full) > 32 * 32 * 9 / 10);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Image occ = patch_occlude(img, donors, 1.0 / 16.0, seed);
        // bounding box of changed pixels must be a rectangle covering >= 1/64
        std::size_t y0 = 32, y1 = 0, x0 = 32, x1 = 0, n = 0;
        const std::size_t hw = 32 * 32;
        for (std::size_t p = 0; p < hw; ++p) {
            bool hit = false;
            for (std::size_t c = 0; c < 3; ++c)
                if (occ.data[c * hw + p] != img.data[c * hw + p]) hit = true;
            if (!hit) continue;
            ++n;
            y0 = std::min(y0, p / 32);
            y1 = std::max(y1, p / 32);
            x0 = std::min(x0, p % 32);
            x1 = std::max(x1, p % 32);
        }
        REQUIRE(n > 0);
        const std::size_t area = (y1 - y0 + 1) * (x1 - x0 + 1);
        CHECK(area >= hw / 64);
        CHECK(double(n) >= 0.95 * double(area)); // patch interior fully replaced
    }
    CHECK_THROWS_AS(patch_occlude(img, {}, 0.25, 1), ConfigError);
    CHECK_THROWS_AS(patch_occlude(img, donors, 0.001, 1), ConfigError);
}

namespace {

Network tiny_classifier(std::uint64_t seed) {
    Network net(LossKind::SoftmaxCrossEntropy);
    net.emplace<ConvLayer>(3, 4, 3, 3, 1, 1);
    net.emplace<ActivationLayer>(ActKind::ReLU);
    net.emplace<MaxPoolLayer>();
    net.emplace<FlattenLayer>();
    net.emplace<LinearLayer>(4 * 8 * 8, 5);
    net.init_params(seed);
    return net;
}

} // namespace

TEST_CASE("saliency map normalization and zero network") {
    Image img = natural_image(16, 16, 10);
    Network net = tiny_classifier(3);
    Tensor map = saliency_map(net, img, 2);
    REQUIRE(map.shape() == std::vector<std::size_t>{16, 16});
    double mx = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        CHECK(map[i] >= 0.0);
        CHECK(map[i] <= 1.0);
        mx = std::max(mx, map[i]);
    }
    CHECK(mx == doctest::Approx(1.0));

    Network zero = tiny_classifier(3);
    for (auto& p : zero.params())
        for (std::size_t j = 0; j < p.n; ++j) p.value[j] = 0.0;
    Tensor zmap = saliency_map(zero, img, 2);
    CHECK(zmap.max_abs() == 0.0);

    CHECK_THROWS_AS(saliency_map(net, img, 7), DataError);
}

TEST_CASE("saliency ranks pixels by influence on the logit") {
    Image img = natural_image(16, 16, 11);
    Network net = tiny_classifier(5);
    const int cls = 1;
    Tensor map = saliency_map(net, img, cls);
    std::size_t top = 0, bot = 0;
    for (std::size_t p = 1; p < map.size(); ++p) {
        if (map[p] > map[top]) top = p;
        if (map[p] < map[bot]) bot = p;
    }
    auto logit = [&](const Image& im) {
        Tensor x({1, 3, 16, 16}, im.data);
        return net.forward(x, false)[cls];
    };
    const double base = logit(img);
    double top_effect = 0.0, bot_effect = 0.0;
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
        const double eps = rng.uniform(-0.05, 0.05);
        Image bumped = img;
        for (std::size_t c = 0; c < 3; ++c) bumped.data[c * 256 + top] += eps;
        top_effect += std::abs(logit(bumped) - base);
        bumped = img;
        for (std::size_t c = 0; c < 3; ++c) bumped.data[c * 256 + bot] += eps;
        bot_effect += std::abs(logit(bumped) - base);
    }
    CHECK(top_effect > bot_effect);
}

TEST_CASE("targeted occlusion: identity, fill contract, NMS centers") {
    Image img = natural_image(24, 24, 12);
    Tensor sal({24, 24});
    // three bumps, one clear global maximum
    auto bump = [&](std::size_t y, std::size_t x, double v) { sal[y * 24 + x] = v; };
    bump(4, 4, 1.0);
    bump(4, 18, 0.8);
    bump(18, 10, 0.6);
    bump(5, 5, 0.9); // within radius of (4,4): must be suppressed

    CHECK(targeted_occlude(img, sal, "black", 0, 3, 7) == img);

    Image occ = targeted_occlude(img, sal, "black", 3, 3, 7);
    // centers: (4,4), (4,18), (18,10); (5,5) suppressed by NMS
    for (const auto& [cy, cx] : {std::pair<int, int>{4, 4}, {4, 18}, {18, 10}})
        for (std::size_t c = 0; c < 3; ++c) CHECK(occ.at(c, std::size_t(cy), std::size_t(cx)) == 0.0);
    // a pixel far from all centers is untouched
    CHECK(occ.at(0, 23, 23) == img.at(0, 23, 23));
    // black fill everywhere inside the discs
    std::size_t zeroed = 0;
    for (std::size_t p = 0; p < 24 * 24; ++p)
        if (occ.data[p] == 0.0 && img.data[p] != 0.0) ++zeroed;
    CHECK(zeroed > 3 * 20); // three discs of radius 3

    Image noise_occ = targeted_occlude(img, sal, "noise", 2, 3, 7);
    CHECK(targeted_occlude(img, sal, "noise", 2, 3, 7) == noise_occ);
    CHECK_THROWS_AS(targeted_occlude(img, sal, "purple", 2, 3, 7), ConfigError);

    Tensor wrong({12, 12});
    CHECK_THROWS_AS(targeted_occlude(img, wrong, "black", 2, 3, 7), DimError);
}

TEST_CASE("deform specs serialize and round trip") {
    DeformSpec s;
    s.kind = DeformKind::SaltPepper;
    s.rate = 0.13;
    s.drop_sigma = 0.7;
    s.seed = 99;
    DeformSpec back = DeformSpec::parse(s.to_string());
    CHECK(back.kind == s.kind);
    CHECK(back.rate == doctest::Approx(s.rate));
    CHECK(back.seed == 99);

    Image img = natural_image(16, 16, 13);
    Image direct = salt_pepper(img, s.rate, s.drop_sigma, s.seed);
    Image via = apply_deform(img, back);
    CHECK(direct == via);
}

TEST_CASE("mix chains compose deterministically") {
    Image img = natural_image(32, 32, 14);
    for (const std::string name : {"mix.light", "mix.heavy"}) {
        auto chain = mix_chain(name, 5);
        Image a = img, b = img;
        for (const auto& s : chain) a = apply_deform(a, s);
        for (const auto& s : chain) b = apply_deform(b, s);
        CHECK(a == b);
        CHECK(changed_pixels(img, a) > 0);
    }
    CHECK_THROWS_AS(mix_chain("mix.nope", 1), ConfigError);
}

TEST_CASE("ppm io round trip") {
    Image img = natural_image(9, 13, 15);
    const std::string path = "/tmp/pcnn_test.ppm";
    write_ppm(path, img);
    Image back = read_ppm(path);
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
    // writing the decoded image again is lossless
    write_ppm(path, back);
    Image again = read_ppm(path);
    CHECK(again == back);
    std::remove(path.c_str());
}
