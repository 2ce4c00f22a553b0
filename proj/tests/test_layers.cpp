#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "pcnn/layers.hpp"
#include "pcnn/network.hpp"
#include "pcnn/powfn.hpp"
#include "pcnn/rng.hpp"

using namespace pcnn;

namespace {

Tensor with_batch(const Tensor& item) {
    std::vector<std::size_t> s = item.shape();
    s.insert(s.begin(), 1);
    return Tensor(s, std::vector<double>(item.data(), item.data() + item.size()));
}

Tensor drop_batch(const Tensor& t) {
    std::vector<std::size_t> s(t.shape().begin() + 1, t.shape().end());
    return Tensor(s, std::vector<double>(t.data(), t.data() + t.size()));
}

// scalar probe loss <go, out>
double probe(Layer& layer, const Tensor& x, const Tensor& go) {
    Tensor out = layer.forward(x, true);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * go[i];
    return s;
}

// finite-difference check of every parameter and the input of a layer
void check_layer_grads(Layer& layer, Tensor x, const Tensor& go, double tol = 1e-5, double step = 1e-5) {
    layer.zero_grad();
    Tensor out = layer.forward(x, true);
    REQUIRE(out.same_shape(go));
    Tensor gx = layer.backward(go);

    std::vector<ParamRef> params;
    layer.collect_params(params, "p");
    for (const auto& p : params) {
        for (std::size_t j = 0; j < p.n; ++j) {
            const double keep = p.value[j];
            p.value[j] = keep + step;
            const double hi = probe(layer, x, go);
            p.value[j] = keep - step;
            const double lo = probe(layer, x, go);
            p.value[j] = keep;
            const double fd = (hi - lo) / (2 * step);
            INFO(p.name, "[", j, "] analytic=", p.grad[j], " fd=", fd);
            CHECK(oracle::rel_err(p.grad[j], fd) < tol);
        }
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (std::abs(x[j]) < 1e-3) continue; // keep away from psi/relu kinks
        const double keep = x[j];
        x[j] = keep + step;
        const double hi = probe(layer, x, go);
        x[j] = keep - step;
        const double lo = probe(layer, x, go);
        x[j] = keep;
        const double fd = (hi - lo) / (2 * step);
        INFO("input[", j, "] analytic=", gx[j], " fd=", fd);
        CHECK(oracle::rel_err(gx[j], fd) < tol);
    }
}

void randomize_pow(PowParams& pp, Rng& rng) {
    for (double& a : pp.alpha) a = rng.uniform(-0.6, 0.9);
    for (double& b : pp.beta) b = rng.uniform(-0.4, 0.8);
}

} // namespace

TEST_CASE("powconv in-channel with identity params equals plain conv exactly") {
    Rng rng(21);
    for (std::size_t lambda : {std::size_t(1), std::size_t(2), std::size_t(4)}) {
        PowConvLayer pl(3, 4, 3, 3, 1, 1, PowMode::InChannel, lambda);
        ConvLayer cl(3, 4, 3, 3, 1, 1);
        Rng r1(99);
        pl.init_params(r1);
        Rng r2(99);
        cl.init_params(r2);
        Tensor x = with_batch(Tensor::random_normal({3, 6, 6}, rng));
        Tensor yp = pl.forward(x, true);
        Tensor yc = cl.forward(x, true);
        for (std::size_t i = 0; i < yp.size(); ++i) CHECK(std::abs(yp[i] - yc[i]) < 1e-12);
        if (lambda == 1)
            for (std::size_t i = 0; i < yp.size(); ++i) CHECK(yp[i] == yc[i]);

        Tensor go = Tensor::random_normal(yp.shape(), rng);
        pl.zero_grad();
        cl.zero_grad();
        Tensor gxp = pl.backward(go);
        Tensor gxc = cl.backward(go);
        for (std::size_t i = 0; i < gxp.size(); ++i) CHECK(std::abs(gxp[i] - gxc[i]) < 1e-10);
    }
}

TEST_CASE("powconv out-channel with identity params equals plain conv") {
    Rng rng(22);
    for (std::size_t lambda : {std::size_t(1), std::size_t(2)}) {
        PowConvLayer pl(4, 3, 3, 3, 1, 1, PowMode::OutChannel, lambda);
        ConvLayer cl(4, 3, 3, 3, 1, 1);
        Rng r1(98);
        pl.init_params(r1);
        Rng r2(98);
        cl.init_params(r2);
        Tensor x = with_batch(Tensor::random_normal({4, 6, 6}, rng));
        Tensor yp = pl.forward(x, true);
        Tensor yc = cl.forward(x, true);
        for (std::size_t i = 0; i < yp.size(); ++i) CHECK(std::abs(yp[i] - yc[i]) < 1e-12);

        Tensor go = Tensor::random_normal(yp.shape(), rng);
        pl.zero_grad();
        cl.zero_grad();
        Tensor gxp = pl.backward(go);
        Tensor gxc = cl.backward(go);
        for (std::size_t i = 0; i < gxp.size(); ++i) CHECK(std::abs(gxp[i] - gxc[i]) < 1e-10);
    }
}

TEST_CASE("powconv in-channel 1x1 single-channel degenerates to scaled psi") {
    Rng rng(23);
    PowConvLayer pl(1, 1, 1, 1, 1, 0, PowMode::InChannel, 1);
    const double w = 1.7;
    pl.kernel().weights[0] = w;
    pl.pow().alpha[0] = 0.4;
    pl.pow().beta[0] = 0.2;
    Tensor x = with_batch(Tensor::random_normal({1, 4, 4}, rng));
    Tensor y = pl.forward(x, true);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == doctest::Approx(w * psi(x[i], 0.4, 0.2)).epsilon(1e-12));
}

TEST_CASE("powconv out-channel single input channel is psi of the convolution") {
    Rng rng(24);
    PowConvLayer pl(1, 3, 3, 3, 1, 1, PowMode::OutChannel, 1);
    Rng ri(5);
    pl.init_params(ri);
    for (std::size_t s = 0; s < pl.pow().alpha.size(); ++s) {
        pl.pow().alpha[s] = 0.3 + 0.1 * double(s);
        pl.pow().beta[s] = 0.1;
    }
    Tensor item = Tensor::random_normal({1, 5, 5}, rng);
    Tensor y = pl.forward(with_batch(item), true);

    ConvKernel k{pl.kernel().weights, 1, 1};
    Tensor base = oracle::conv2d_direct(item, k);
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t p = 0; p < 25; ++p) {
            const double want = psi(base[d * 25 + p], pl.pow().alpha[d], pl.pow().beta[d]);
            CHECK(y[d * 25 + p] == doctest::Approx(want).epsilon(1e-10));
        }
}

TEST_CASE("powconv in-channel matches the materialize-then-convolve oracle") {
    Rng rng(25);
    PowConvLayer pl(2, 4, 3, 3, 1, 1, PowMode::InChannel, 2);
    Rng ri(7);
    pl.init_params(ri);
    randomize_pow(pl.pow(), rng);
    Tensor item = Tensor::random_normal({2, 5, 5}, rng);
    Tensor got = pl.forward(with_batch(item), true);

    // oracle: per group, materialize psi(T) and direct-convolve that group's slice
    const auto& pp = pl.pow();
    for (std::size_t d = 0; d < 4; ++d) {
        const std::size_t lam = pp.group_of(d);
        Tensor psi_t({2, 5, 5});
        for (std::size_t c = 0; c < 2; ++c) {
            const std::size_t s = pp.slot(c, lam);
            for (std::size_t t = 0; t < 25; ++t)
                psi_t[c * 25 + t] = psi(item[c * 25 + t], pp.alpha[s], pp.beta[s]);
        }
        Tensor w_d({2, 1, 3, 3});
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t t = 0; t < 9; ++t) w_d[c * 9 + t] = pl.kernel().weights[(c * 4 + d) * 9 + t];
        Tensor want = oracle::conv2d_direct(psi_t, ConvKernel{w_d, 1, 1});
        for (std::size_t p = 0; p < 25; ++p)
            CHECK(got[d * 25 + p] == doctest::Approx(want[p]).epsilon(1e-10));
    }
}

TEST_CASE("powconv out-channel matches the convolve-map-sum oracle") {
    Rng rng(26);
    PowConvLayer pl(2, 2, 3, 3, 1, 1, PowMode::OutChannel, 1);
    Rng ri(9);
    pl.init_params(ri);
    randomize_pow(pl.pow(), rng);
    Tensor item = Tensor::random_normal({2, 5, 5}, rng);
    Tensor got = pl.forward(with_batch(item), true);

    const auto& pp = pl.pow();
    Tensor want({2, 5, 5});
    for (std::size_t c = 0; c < 2; ++c) {
        Tensor chan({1, 5, 5}, std::vector<double>(item.data() + c * 25, item.data() + (c + 1) * 25));
        Tensor w_c({1, 2, 3, 3});
        for (std::size_t d = 0; d < 2; ++d)
            for (std::size_t t = 0; t < 9; ++t) w_c[d * 9 + t] = pl.kernel().weights[(c * 2 + d) * 9 + t];
        Tensor v = oracle::conv2d_direct(chan, ConvKernel{w_c, 1, 1});
        const std::size_t lam = pp.group_of(c);
        for (std::size_t d = 0; d < 2; ++d) {
            const std::size_t s = pp.slot(d, lam);
            for (std::size_t p = 0; p < 25; ++p) want[d * 25 + p] += psi(v[d * 25 + p], pp.alpha[s], pp.beta[s]);
        }
    }
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("powconv backward matches finite differences in both modes") {
    Rng rng(27);
    for (PowMode mode : {PowMode::InChannel, PowMode::OutChannel}) {
        for (std::size_t lambda : {std::size_t(1), std::size_t(2)}) {
            PowConvLayer pl(2, 4, 3, 3, 1, 1, mode, lambda);
            Rng ri(31);
            pl.init_params(ri);
            randomize_pow(pl.pow(), rng);
            Tensor x = with_batch(Tensor::random_normal({2, 5, 5}, rng));
            // keep inputs away from zero so |x|^alpha stays smooth
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(x[i]) < 0.05) x[i] = x[i] >= 0 ? 0.05 : -0.05;
            Tensor go = Tensor::random_normal({1, 4, 5, 5}, rng);
            check_layer_grads(pl, x, go);
        }
    }
}

TEST_CASE("powconv zero upstream gradient produces zero gradients") {
    Rng rng(28);
    PowConvLayer pl(2, 2, 3, 3, 1, 1, PowMode::InChannel, 2);
    Rng ri(13);
    pl.init_params(ri);
    randomize_pow(pl.pow(), rng);
    Tensor x = with_batch(Tensor::random_normal({2, 4, 4}, rng));
    pl.forward(x, true);
    pl.zero_grad();
    Tensor gz({1, 2, 4, 4});
    Tensor gx = pl.backward(gz);
    CHECK(gx.max_abs() == 0.0);
    std::vector<ParamRef> params;
    pl.collect_params(params, "p");
    for (const auto& p : params)
        for (std::size_t j = 0; j < p.n; ++j) CHECK(p.grad[j] == 0.0);
}

TEST_CASE("powconv slot accounting: perturbing a slot only moves its channels") {
    Rng rng(29);
    PowConvLayer pl(2, 4, 3, 3, 1, 1, PowMode::InChannel, 2);
    Rng ri(17);
    pl.init_params(ri);
    CHECK(pl.pow().alpha.size() == 4); // Lambda * C

    Tensor x = with_batch(Tensor::random_normal({2, 5, 5}, rng));
    Tensor base = pl.forward(x, true);
    // slot (c=0, lambda=1) affects output channels 2,3 only
    pl.pow().alpha[pl.pow().slot(0, 1)] = 0.5;
    Tensor bumped = pl.forward(x, true);
    const std::size_t p = 25;
    for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t t = 0; t < p; ++t) CHECK(bumped[d * p + t] == base[d * p + t]);
    double diff = 0.0;
    for (std::size_t d = 2; d < 4; ++d)
        for (std::size_t t = 0; t < p; ++t) diff += std::abs(bumped[d * p + t] - base[d * p + t]);
    CHECK(diff > 1e-3);

    PowConvLayer po(4, 2, 3, 3, 1, 1, PowMode::OutChannel, 2);
    CHECK(po.pow().alpha.size() == 4); // Lambda * D
}

TEST_CASE("batchnorm symmetric pair maps to plus-minus one") {
    BatchNormLayer bn(3, false);
    Tensor x({2, 3});
    for (std::size_t f = 0; f < 3; ++f) {
        x.at(0, f) = -double(f + 1);
        x.at(1, f) = double(f + 1);
    }
    Tensor y = bn.forward(x, true);
    for (std::size_t f = 0; f < 3; ++f) {
        CHECK(y.at(0, f) == doctest::Approx(-1.0).epsilon(1e-4));
        CHECK(y.at(1, f) == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm constant feature maps to zero") {
    BatchNormLayer bn(2, false);
    Tensor x({4, 2});
    x.fill(3.7);
    Tensor y = bn.forward(x, true);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i]) < 1e-9);
}

TEST_CASE("batchnorm normalizes moments on a random batch") {
    Rng rng(31);
    BatchNormLayer bn(5, false);
    Tensor x = Tensor::random_normal({256, 5}, rng, 3.0, 2.5);
    Tensor y = bn.forward(x, true);
    for (std::size_t f = 0; f < 5; ++f) {
        double m = 0, v = 0;
        for (std::size_t b = 0; b < 256; ++b) m += y.at(b, f);
        m /= 256;
        for (std::size_t b = 0; b < 256; ++b) v += (y.at(b, f) - m) * (y.at(b, f) - m);
        v /= 256;
        CHECK(std::abs(m) < 1e-10);
        CHECK(std::abs(v - 1.0) < 1e-4);
    }
}

TEST_CASE("batchnorm requires batch >= 2 in train mode") {
    BatchNormLayer bn(2, true);
    Tensor x({1, 2});
    CHECK_THROWS_AS(bn.forward(x, true), ConfigError);
    CHECK_NOTHROW(bn.forward(x, false));
}

TEST_CASE("batchnorm backward matches finite differences") {
    Rng rng(32);
    BatchNormLayer bn(3, true);
    Tensor x = Tensor::random_normal({6, 3}, rng);
    Tensor go = Tensor::random_normal({6, 3}, rng);
    check_layer_grads(bn, x, go, 2e-5);

    // spatial form
    BatchNormLayer bn4(2, true);
    Tensor x4 = Tensor::random_normal({3, 2, 4, 4}, rng);
    Tensor go4 = Tensor::random_normal({3, 2, 4, 4}, rng);
    check_layer_grads(bn4, x4, go4, 2e-5);
}

TEST_CASE("activation definitions") {
    ActivationLayer relu(ActKind::ReLU), softsign(ActKind::Softsign), tanh_l(ActKind::Tanh);
    Tensor x({1, 4}, {-2.0, 3.0, 1.0, -1.0});
    Tensor yr = relu.forward(x, true);
    CHECK(yr[0] == 0.0);
    CHECK(yr[1] == 3.0);
    Tensor ys = softsign.forward(x, true);
    CHECK(ys[2] == doctest::Approx(0.5));
    CHECK(ys[3] == doctest::Approx(-0.5));
    Tensor yt = tanh_l.forward(x, true);
    CHECK(yt[1] == doctest::Approx(std::tanh(3.0)));
}

TEST_CASE("activation backwards match finite differences away from zero") {
    Rng rng(33);
    for (ActKind k : {ActKind::ReLU, ActKind::Tanh, ActKind::Softsign}) {
        ActivationLayer layer(k);
        Tensor x = Tensor::random_normal({2, 8}, rng);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(x[i]) < 0.05) x[i] = 0.5;
        Tensor go = Tensor::random_normal({2, 8}, rng);
        check_layer_grads(layer, x, go, 1e-6);
    }
}

TEST_CASE("linear identity, constant, and oracle") {
    LinearLayer id(3, 3);
    for (std::size_t i = 0; i < 3; ++i) id.weights().at(i, i) = 1.0;
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = id.forward(x, true);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

    LinearLayer cb(3, 2);
    cb.bias().at(0) = 1.5;
    cb.bias().at(1) = -0.5;
    Tensor yc = cb.forward(x, true);
    CHECK(yc.at(0, 0) == 1.5);
    CHECK(yc.at(1, 1) == -0.5);

    Rng rng(34);
    LinearLayer rl(5, 4);
    rl.init_params(rng);
    for (std::size_t i = 0; i < 4; ++i) rl.bias()[i] = rng.normal();
    Tensor xr = Tensor::random_normal({3, 5}, rng);
    Tensor got = rl.forward(xr, true);
    Tensor want = oracle::linear_direct(xr, rl.weights(), rl.bias());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("linear backward matches finite differences") {
    Rng rng(35);
    LinearLayer layer(4, 3);
    layer.init_params(rng);
    Tensor x = Tensor::random_normal({2, 4}, rng);
    Tensor go = Tensor::random_normal({2, 3}, rng);
    check_layer_grads(layer, x, go, 1e-6);
}

TEST_CASE("loss heads: trivial values") {
    Tensor uniform({2, 8});
    LossOut sce = softmax_cross_entropy(uniform, {3, 5});
    CHECK(sce.value == doctest::Approx(std::log(8.0)).epsilon(1e-12));

    Rng rng(36);
    Tensor p = Tensor::random_normal({3, 4}, rng);
    LossOut m = mean_squared_error(p, p);
    CHECK(m.value == 0.0);

    CHECK_THROWS_AS(softmax_cross_entropy(uniform, {3, 9}), DataError);
    CHECK_THROWS_AS(softmax_cross_entropy(uniform, {-1, 2}), DataError);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(37);
    Tensor logits = Tensor::random_normal({3, 5}, rng);
    std::vector<int> labels{1, 4, 0};
    LossOut sce = softmax_cross_entropy(logits, labels);
    const double step = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double keep = logits[i];
        logits[i] = keep + step;
        const double hi = softmax_cross_entropy(logits, labels).value;
        logits[i] = keep - step;
        const double lo = softmax_cross_entropy(logits, labels).value;
        logits[i] = keep;
        CHECK(oracle::rel_err(sce.grad[i], (hi - lo) / (2 * step)) < 1e-6);
    }

    Tensor pred = Tensor::random_normal({2, 3}, rng);
    Tensor target = Tensor::random_normal({2, 3}, rng);
    LossOut mse = mean_squared_error(pred, target);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double keep = pred[i];
        pred[i] = keep + step;
        const double hi = mean_squared_error(pred, target).value;
        pred[i] = keep - step;
        const double lo = mean_squared_error(pred, target).value;
        pred[i] = keep;
        CHECK(oracle::rel_err(mse.grad[i], (hi - lo) / (2 * step)) < 1e-6);
    }
}

TEST_CASE("maxpool and flatten layers round-trip shapes") {
    Rng rng(38);
    MaxPoolLayer mp;
    Tensor x = Tensor::random_normal({2, 3, 4, 4}, rng);
    Tensor y = mp.forward(x, true);
    CHECK(y.shape() == std::vector<std::size_t>{2, 3, 2, 2});
    Tensor gx = mp.backward(Tensor::random_normal(y.shape(), rng));
    CHECK(gx.shape() == x.shape());

    FlattenLayer fl;
    Tensor f = fl.forward(x, true);
    CHECK(f.shape() == std::vector<std::size_t>{2, 48});
    Tensor gf = fl.backward(f);
    CHECK(gf.shape() == x.shape());
}

TEST_CASE("full network joint gradient passes a directional check") {
    Rng rng(39);
    Network net(LossKind::SoftmaxCrossEntropy);
    net.emplace<PsiLayer>();
    net.emplace<LinearLayer>(6, 8);
    net.emplace<ActivationLayer>(ActKind::ReLU);
    net.emplace<LinearLayer>(8, 4);
    net.init_params(42);

    Tensor x = Tensor::random_normal({5, 6}, rng);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (std::abs(x[i]) < 0.05) x[i] = 0.5;
    std::vector<int> labels{0, 1, 2, 3, 1};

    net.zero_grad();
    Tensor out = net.forward(x, true);
    LossOut l = net.loss(out, labels);
    net.backward(l.grad);

    auto params = net.params();
    // random direction over all parameters
    Rng dr(77);
    std::vector<std::vector<double>> dir(params.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        dir[i].resize(params[i].n);
        for (std::size_t j = 0; j < params[i].n; ++j) {
            dir[i][j] = dr.normal();
            dot += dir[i][j] * params[i].grad[j];
        }
    }
    auto eval = [&]() {
        Tensor o = net.forward(x, true);
        return net.loss(o, labels).value;
    };
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].n; ++j) params[i].value[j] += h * dir[i][j];
    const double hi = eval();
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].n; ++j) params[i].value[j] -= 2 * h * dir[i][j];
    const double lo = eval();
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].n; ++j) params[i].value[j] += h * dir[i][j];
    const double fd = (hi - lo) / (2 * h);
    CHECK(oracle::rel_err(dot, fd) < 1e-5);
}

TEST_CASE("network checkpoint round trip") {
    Rng rng(40);
    Network net(LossKind::SoftmaxCrossEntropy);
    net.emplace<PowConvLayer>(2, 4, 3, 3, 1, 1, PowMode::InChannel, 2);
    net.emplace<BatchNormLayer>(4, true);
    net.emplace<ActivationLayer>(ActKind::ReLU);
    net.emplace<MaxPoolLayer>();
    net.emplace<FlattenLayer>();
    net.emplace<LinearLayer>(4 * 2 * 2, 3);
    net.init_params(7);
    auto& pc = dynamic_cast<PowConvLayer&>(net.layer(0));
    pc.pow().alpha[1] = 0.25;
    pc.pow().beta[2] = -0.1;

    Tensor x = Tensor::random_normal({2, 2, 4, 4}, rng);
    net.forward(x, true); // populate BN running stats
    Tensor ref = net.forward(x, false);

    const std::string dir = (std::filesystem::temp_directory_path() / "pcnn_ckpt").string();
    net.save(dir);
    Network back = Network::load(dir);
    Tensor got = back.forward(x, false);
    REQUIRE(got.same_shape(ref));
    for (std::size_t i = 0; i < got.size(); ++i) {
        // PCT1 stores f32; reload is accurate to float precision
        CHECK(std::abs(got[i] - ref[i]) < 1e-5);
    }
    std::filesystem::remove_all(dir);
}
