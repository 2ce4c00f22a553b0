#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "pcnn/powfn.hpp"
#include "pcnn/rng.hpp"

using namespace pcnn;

TEST_CASE("psi direct evaluations") {
    CHECK(psi(2.0, 0.0, 0.0) == 2.0);
    CHECK(psi(-3.0, 1.0, 1.0) == doctest::Approx(-4.5));
    CHECK(psi(0.25, -0.5, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("psi with alpha=0, beta=0 is the exact identity") {
    Rng rng(11);
    std::vector<double> x(64);
    for (double& v : x) v = rng.normal() * 10;
    x[0] = 0.0;
    x[1] = -0.0;
    auto y = psi_forward(x, 0.0, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

    std::vector<double> g(64);
    for (double& v : g) v = rng.normal();
    auto bk = psi_backward(x, y, g, 0.0, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(bk.grad_x[i] == g[i]);
}

TEST_CASE("psi odd symmetry is exact") {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
        const double x = rng.normal() * 5;
        const double a = rng.uniform(kAlphaMin + 1e-6, kAlphaMax);
        const double b = rng.uniform(kBetaMin + 1e-6, 2.0);
        CHECK(psi(-x, a, b) == -psi(x, a, b));
    }
}

TEST_CASE("psi is non-decreasing in x for in-bound parameters") {
    Rng rng(13);
    for (int t = 0; t < 200; ++t) {
        const double a = rng.uniform(kAlphaMin + 1e-6, kAlphaMax);
        const double b = rng.uniform(kBetaMin + 1e-6, 2.0);
        double x1 = rng.normal() * 3, x2 = rng.normal() * 3;
        if (x1 > x2) std::swap(x1, x2);
        CHECK(psi(x1, a, b) <= psi(x2, a, b));
    }
}

TEST_CASE("psi scale consistency: psi * (beta+1) does not depend on beta") {
    Rng rng(14);
    for (int t = 0; t < 100; ++t) {
        const double x = rng.normal() * 4;
        const double a = rng.uniform(kAlphaMin + 1e-6, kAlphaMax);
        const double b1 = rng.uniform(kBetaMin + 1e-6, 2.0), b2 = rng.uniform(kBetaMin + 1e-6, 2.0);
        CHECK(psi(x, a, b1) * (b1 + 1.0) == doctest::Approx(psi(x, a, b2) * (b2 + 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("psi_backward trivial evaluations") {
    {
        // x = 1: ln 1 = 0 so the alpha gradient vanishes
        std::vector<double> x{1.0}, g{1.0};
        for (double a : {-0.5, 0.0, 0.7, 2.0}) {
            auto y = psi_forward(x, a, 0.0);
            auto bk = psi_backward(x, y, g, a, 0.0);
            CHECK(bk.grad_alpha == 0.0);
        }
    }
    {
        const double e = std::exp(1.0);
        std::vector<double> x{e}, g{1.0};
        auto y = psi_forward(x, 0.0, 0.0);
        auto bk = psi_backward(x, y, g, 0.0, 0.0);
        CHECK(bk.grad_alpha == doctest::Approx(e).epsilon(1e-12));
        CHECK(bk.grad_beta == doctest::Approx(-e).epsilon(1e-12));
        CHECK(bk.grad_x[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("psi_backward zero-input rule") {
    std::vector<double> x{0.0}, g{1.0};
    for (double a : {-0.5, 0.25, 1.0, 2.5}) {
        for (double b : {0.0, 0.5}) {
            auto y = psi_forward(x, a, b);
            CHECK(y[0] == 0.0);
            auto bk = psi_backward(x, y, g, a, b);
            CHECK(bk.grad_x[0] == 0.0);
            CHECK(bk.grad_alpha == 0.0);
        }
    }
}

TEST_CASE("psi_backward matches finite differences at the spec point") {
    std::vector<double> x{2.0}, g{1.0};
    double alpha = 0.5, beta = 0.3;
    auto y = psi_forward(x, alpha, beta);
    auto bk = psi_backward(x, y, g, alpha, beta);

    const double step = 1e-6;
    auto eval = [&](double a, double b, double xv) { return psi(xv, a, b); };
    const double fda = (eval(alpha + step, beta, x[0]) - eval(alpha - step, beta, x[0])) / (2 * step);
    const double fdb = (eval(alpha, beta + step, x[0]) - eval(alpha, beta - step, x[0])) / (2 * step);
    const double fdx = (eval(alpha, beta, x[0] + step) - eval(alpha, beta, x[0] - step)) / (2 * step);
    CHECK(oracle::rel_err(bk.grad_alpha, fda) < 1e-6);
    CHECK(oracle::rel_err(bk.grad_beta, fdb) < 1e-6);
    CHECK(oracle::rel_err(bk.grad_x[0], fdx) < 1e-6);
}

TEST_CASE("psi gradients match finite differences on 1000 random instances") {
    Rng rng(15);
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
        const double mag = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
        const double x0 = rng.uniform() < 0.5 ? -mag : mag;
        const double a = rng.uniform(kAlphaMin + 0.01, kAlphaMax);
        const double b = rng.uniform(kBetaMin + 0.01, 2.0);
        const double g0 = rng.normal();
        std::vector<double> x{x0}, g{g0};
        auto y = psi_forward(x, a, b);
        auto bk = psi_backward(x, y, g, a, b);

        const double step = 1e-6 * std::max(1.0, std::abs(x0));
        const double fda = g0 * (psi(x0, a + step, b) - psi(x0, a - step, b)) / (2 * step);
        const double fdb = g0 * (psi(x0, a, b + step) - psi(x0, a, b - step)) / (2 * step);
        const double fdx = g0 * (psi(x0 + step, a, b) - psi(x0 - step, a, b)) / (2 * step);
        CHECK(oracle::rel_err(bk.grad_alpha, fda) < 1e-5);
        CHECK(oracle::rel_err(bk.grad_beta, fdb) < 1e-5);
        CHECK(oracle::rel_err(bk.grad_x[0], fdx) < 1e-5);
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("psi rejects out-of-bound parameters") {
    std::vector<double> x{1.0};
    std::vector<double> y(1);
    CHECK_THROWS_AS(psi_forward(x.data(), 1, -0.99, 0.0, y.data()), ConfigError);
    CHECK_THROWS_AS(psi_forward(x.data(), 1, 3.5, 0.0, y.data()), ConfigError);
    CHECK_THROWS_AS(psi_forward(x.data(), 1, 0.0, -0.9999, y.data()), ConfigError);
}

TEST_CASE("psi_backward rejects mismatched lengths") {
    std::vector<double> x{1.0, 2.0}, y{1.0}, g{1.0};
    CHECK_THROWS_AS(psi_backward(x, y, g, 0.0, 0.0), DimError);
}

TEST_CASE("PowParams layout and bounds") {
    auto p = PowParams::make(PowMode::InChannel, 2, 3, 4);
    CHECK(p.alpha.size() == 6); // Lambda * C
    CHECK(p.slots() == 6);
    CHECK(p.group_of(0) == 0);
    CHECK(p.group_of(1) == 0);
    CHECK(p.group_of(2) == 1);
    CHECK(p.identity());

    auto po = PowParams::make(PowMode::OutChannel, 2, 4, 6);
    CHECK(po.alpha.size() == 12); // Lambda * D
    CHECK(po.group_of(3) == 1);  // input channels split 2+2

    auto ps = PowParams::make(PowMode::InChannel, 1, 2, 2, true);
    CHECK(ps.alpha.size() == 4); // doubled for split sign
    CHECK(ps.slots() == 2);

    CHECK_THROWS_AS(PowParams::make(PowMode::InChannel, 3, 2, 4), ConfigError);

    p.alpha[0] = 9.0;
    CHECK_THROWS_AS(p.validate(3, 4), ConfigError);
    p.clamp_into_bounds();
    CHECK(p.alpha[0] == kAlphaMax);
}
