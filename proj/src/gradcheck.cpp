#include <cmath>
#include <numeric>

#include "pcnn/experiments.hpp"
#include "pcnn/rng.hpp"

// Finite-difference validation of every analytic gradient in the engine.
// Each instance draws a fresh random configuration, bounds inputs away from
// zero (the power map and ReLU are non-smooth there), and compares one random
// directional derivative of a probe loss against the backward pass.

namespace pcnn {

namespace {

constexpr double kStep = 1e-5;

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-10});
}

// <go, layer(x)> as the probe loss
double probe_loss(Layer& layer, const Tensor& x, const Tensor& go) {
    Tensor out = layer.forward(x, true);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * go[i];
    return s;
}

// one directional derivative of the probe through input + all parameters
double layer_directional_err(Layer& layer, Tensor& x, const Tensor& go, Rng& rng) {
    layer.zero_grad();
    layer.forward(x, true);
    Tensor gx = layer.backward(go);
    std::vector<ParamRef> params;
    layer.collect_params(params, "p");

    std::vector<double> dir_x(x.size());
    std::vector<std::vector<double>> dir_p(params.size());
    double norm2 = 0.0;
    for (double& d : dir_x) {
        d = rng.normal();
        norm2 += d * d;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        dir_p[i].resize(params[i].n);
        for (double& d : dir_p[i]) {
            d = rng.normal();
            norm2 += d * d;
        }
    }
    const double inv = 1.0 / std::sqrt(norm2);
    double analytic = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) analytic += gx[j] * dir_x[j] * inv;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].n; ++j) analytic += params[i].grad[j] * dir_p[i][j] * inv;

    auto shift = [&](double h) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += h * dir_x[j] * inv;
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < params[i].n; ++j) params[i].value[j] += h * dir_p[i][j] * inv;
    };
    shift(kStep);
    const double hi = probe_loss(layer, x, go);
    shift(-2 * kStep);
    const double lo = probe_loss(layer, x, go);
    shift(kStep);
    return rel_err(analytic, (hi - lo) / (2 * kStep));
}

Tensor away_from_zero(Tensor t, double floor_mag) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (std::abs(t[i]) < floor_mag) t[i] = t[i] >= 0 ? floor_mag : -floor_mag;
    return t;
}

void randomize_pow_table(PowParams& pp, Rng& rng) {
    for (double& a : pp.alpha) a = rng.uniform(-0.6, 0.9);
    for (double& b : pp.beta) b = rng.uniform(-0.4, 0.8);
}

GradCheckItem check_psi(std::uint64_t seed, std::size_t instances) {
    GradCheckItem item{"psi (alpha, beta, x gradients)", instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc.psi");
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t n = 8;
        std::vector<double> x(n), g(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
            x[i] = rng.uniform() < 0.5 ? -mag : mag;
            g[i] = rng.normal();
        }
        const double a = rng.uniform(-0.9, 2.5), b = rng.uniform(-0.5, 2.0);
        auto y = psi_forward(x, a, b);
        auto bk = psi_backward(x, y, g, a, b);
        auto loss = [&](double aa, double bb, const std::vector<double>& xx) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += g[i] * psi(xx[i], aa, bb);
            return s;
        };
        const double fda = (loss(a + kStep, b, x) - loss(a - kStep, b, x)) / (2 * kStep);
        const double fdb = (loss(a, b + kStep, x) - loss(a, b - kStep, x)) / (2 * kStep);
        item.max_rel_err = std::max(item.max_rel_err, rel_err(bk.grad_alpha, fda));
        item.max_rel_err = std::max(item.max_rel_err, rel_err(bk.grad_beta, fdb));
        for (std::size_t i = 0; i < n; ++i) {
            // difference the single term (same derivative, no cancellation
            // against the other coordinates' much larger contributions); a
            // coordinate of magnitude 1e-3 also needs a proportionally smaller
            // step or the central difference's own truncation error dominates
            const double h = kStep * std::max(0.01, std::abs(x[i]));
            const double hi = g[i] * psi(x[i] + h, a, b);
            const double lo = g[i] * psi(x[i] - h, a, b);
            item.max_rel_err = std::max(item.max_rel_err, rel_err(bk.grad_x[i], (hi - lo) / (2 * h)));
        }
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

GradCheckItem check_powconv(PowMode mode, std::size_t lambda, std::uint64_t seed, std::size_t instances) {
    const std::string label =
        std::string("powconv ") + (mode == PowMode::InChannel ? "in-channel" : "out-channel") + " Lambda=" +
        std::to_string(lambda);
    GradCheckItem item{label, instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc." + label);
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t c = mode == PowMode::InChannel ? 2 : 4;
        const std::size_t d = mode == PowMode::InChannel ? 4 : 3;
        PowConvLayer layer(c, d, 3, 3, 1, 1, mode, lambda);
        Tensor x({1, c, 5, 5});
        if (mode == PowMode::InChannel) {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
            x = away_from_zero(std::move(x), 0.05);
            for (std::size_t i = 0; i < layer.kernel().weights.size(); ++i)
                layer.kernel().weights[i] = rng.normal(0.0, 0.4);
        } else {
            // positive inputs and weights keep every single-channel response
            // bounded away from the power map's kink at zero
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.5, 1.5);
            for (std::size_t i = 0; i < layer.kernel().weights.size(); ++i)
                layer.kernel().weights[i] = rng.uniform(0.05, 0.3);
        }
        randomize_pow_table(layer.pow(), rng);
        Tensor go = Tensor::random_normal({1, d, 5, 5}, rng);
        item.max_rel_err = std::max(item.max_rel_err, layer_directional_err(layer, x, go, rng));
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

GradCheckItem check_batchnorm(std::uint64_t seed, std::size_t instances) {
    GradCheckItem item{"batchnorm (train mode)", instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc.bn");
    for (std::size_t t = 0; t < instances; ++t) {
        if (t % 2 == 0) {
            BatchNormLayer bn(3, true);
            Tensor x = Tensor::random_normal({4, 3}, rng, rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0));
            Tensor go = Tensor::random_normal({4, 3}, rng);
            item.max_rel_err = std::max(item.max_rel_err, layer_directional_err(bn, x, go, rng));
        } else {
            BatchNormLayer bn(2, true);
            Tensor x = Tensor::random_normal({3, 2, 4, 4}, rng);
            Tensor go = Tensor::random_normal({3, 2, 4, 4}, rng);
            item.max_rel_err = std::max(item.max_rel_err, layer_directional_err(bn, x, go, rng));
        }
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

GradCheckItem check_activation(ActKind kind, const std::string& name, std::uint64_t seed, std::size_t instances) {
    GradCheckItem item{name, instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc." + name);
    for (std::size_t t = 0; t < instances; ++t) {
        ActivationLayer layer(kind);
        Tensor x = away_from_zero(Tensor::random_normal({2, 16}, rng), 1e-3);
        Tensor go = Tensor::random_normal({2, 16}, rng);
        item.max_rel_err = std::max(item.max_rel_err, layer_directional_err(layer, x, go, rng));
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

GradCheckItem check_linear(std::uint64_t seed, std::size_t instances) {
    GradCheckItem item{"linear", instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc.linear");
    for (std::size_t t = 0; t < instances; ++t) {
        LinearLayer layer(5, 4);
        layer.init_params(rng);
        Tensor x = Tensor::random_normal({3, 5}, rng);
        Tensor go = Tensor::random_normal({3, 4}, rng);
        item.max_rel_err = std::max(item.max_rel_err, layer_directional_err(layer, x, go, rng));
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

GradCheckItem check_loss(LossKind kind, std::uint64_t seed, std::size_t instances) {
    GradCheckItem item{kind == LossKind::SoftmaxCrossEntropy ? "softmax cross-entropy" : "mean squared error",
                       instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc.loss" + item.name);
    for (std::size_t t = 0; t < instances; ++t) {
        Tensor pred = Tensor::random_normal({3, 6}, rng);
        std::vector<int> labels{int(rng.below(6)), int(rng.below(6)), int(rng.below(6))};
        Tensor target = Tensor::random_normal({3, 6}, rng);
        auto loss = [&]() {
            return kind == LossKind::SoftmaxCrossEntropy ? softmax_cross_entropy(pred, labels).value
                                                         : mean_squared_error(pred, target).value;
        };
        const Tensor grad = kind == LossKind::SoftmaxCrossEntropy ? softmax_cross_entropy(pred, labels).grad
                                                                  : mean_squared_error(pred, target).grad;
        std::vector<double> dir(pred.size());
        double norm2 = 0.0;
        for (double& v : dir) {
            v = rng.normal();
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        double analytic = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) analytic += grad[i] * dir[i] * inv;
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += kStep * dir[i] * inv;
        const double hi = loss();
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] -= 2 * kStep * dir[i] * inv;
        const double lo = loss();
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += kStep * dir[i] * inv;
        item.max_rel_err = std::max(item.max_rel_err, rel_err(analytic, (hi - lo) / (2 * kStep)));
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

GradCheckItem check_full_network(std::uint64_t seed, std::size_t instances) {
    GradCheckItem item{"full network (joint direction)", instances, 0.0, 1e-5, false};
    Rng rng = Rng::stream(seed, "gc.net");
    for (std::size_t t = 0; t < instances; ++t) {
        Network net(LossKind::SoftmaxCrossEntropy);
        net.emplace<PsiLayer>();
        net.emplace<LinearLayer>(6, 8);
        net.emplace<ActivationLayer>(ActKind::ReLU);
        net.emplace<LinearLayer>(8, 4);
        net.init_params(rng.next_u64());
        Tensor x = away_from_zero(Tensor::random_normal({4, 6}, rng), 0.05);
        std::vector<int> labels(4);
        for (auto& l : labels) l = int(rng.below(4));

        net.zero_grad();
        LossOut l0 = net.loss(net.forward(x, true), labels);
        net.backward(l0.grad);
        auto params = net.params();
        std::vector<std::vector<double>> dir(params.size());
        double norm2 = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            dir[i].resize(params[i].n);
            for (double& v : dir[i]) {
                v = rng.normal();
                norm2 += v * v;
            }
        }
        const double inv = 1.0 / std::sqrt(norm2);
        double analytic = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < params[i].n; ++j) analytic += params[i].grad[j] * dir[i][j] * inv;
        auto shift = [&](double h) {
            for (std::size_t i = 0; i < params.size(); ++i)
                for (std::size_t j = 0; j < params[i].n; ++j) params[i].value[j] += h * dir[i][j] * inv;
        };
        shift(kStep);
        const double hi = net.loss(net.forward(x, true), labels).value;
        shift(-2 * kStep);
        const double lo = net.loss(net.forward(x, true), labels).value;
        shift(kStep);
        item.max_rel_err = std::max(item.max_rel_err, rel_err(analytic, (hi - lo) / (2 * kStep)));
    }
    item.pass = item.max_rel_err <= item.tolerance;
    return item;
}

} // namespace

std::vector<GradCheckItem> run_gradcheck(std::uint64_t seed, std::size_t instances) {
    std::vector<GradCheckItem> items;
    items.push_back(check_psi(seed, instances));
    for (std::size_t lambda : {1, 2, 4})
        items.push_back(check_powconv(PowMode::InChannel, lambda, seed, instances));
    for (std::size_t lambda : {1, 2, 4})
        items.push_back(check_powconv(PowMode::OutChannel, lambda, seed, instances));
    items.push_back(check_batchnorm(seed, instances));
    items.push_back(check_activation(ActKind::ReLU, "relu", seed, instances));
    items.push_back(check_activation(ActKind::Tanh, "tanh", seed, instances));
    items.push_back(check_activation(ActKind::Softsign, "softsign", seed, instances));
    items.push_back(check_linear(seed, instances));
    items.push_back(check_loss(LossKind::SoftmaxCrossEntropy, seed, instances));
    items.push_back(check_loss(LossKind::MeanSquaredError, seed, instances));
    items.push_back(check_full_network(seed, std::max<std::size_t>(instances / 5, 10)));
    return items;
}

} // namespace pcnn
