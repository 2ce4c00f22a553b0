#include "doctest.h"

#include <cmath>
#include <limits>

#include "pcnn/optim.hpp"
#include "pcnn/powfn.hpp"

using namespace pcnn;

TEST_CASE("plain gradient step") {
    OptimConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.0;
    double theta = 1.0, grad = 2.0, vel = 0.0;
    sgd_nesterov_step(&theta, &grad, &vel, 1, cfg);
    CHECK(theta == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("zero gradient with zero velocity is stationary") {
    OptimConfig cfg;
    double theta = 3.0, grad = 0.0, vel = 0.0;
    sgd_nesterov_step(&theta, &grad, &vel, 1, cfg);
    CHECK(theta == 3.0);
}

TEST_CASE("nesterov momentum converges on a quadratic bowl") {
    OptimConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.nesterov = true;
    double theta = 1.0, vel = 0.0;
    // independent simulation of the published update rule
    double t_ref = 1.0, v_ref = 0.0;
    for (int i = 0; i < 50; ++i) {
        double grad = 2.0 * theta; // f = theta^2
        sgd_nesterov_step(&theta, &grad, &vel, 1, cfg);
        const double g = 2.0 * t_ref;
        v_ref = 0.9 * v_ref - 0.05 * g;
        t_ref = t_ref + 0.9 * v_ref - 0.05 * g;
        CHECK(theta == doctest::Approx(t_ref).epsilon(1e-12));
        if (i == 19) CHECK(std::abs(theta) == doctest::Approx(0.119972239694763).epsilon(1e-10));
    }
    CHECK(std::abs(theta) < 1e-2); // reached by step 50
}

TEST_CASE("pow gradient adjustment examples") {
    OptimConfig cfg;
    cfg.pow_l2 = 0.0;
    CHECK(pow_grad_adjust_alpha(1.0, 0.0, cfg) == 1.0);

    cfg.pow_l2 = 0.1;
    // |alpha| == threshold does not shrink (strict inequality)
    CHECK(pow_grad_adjust_alpha(1.0, 0.5, cfg) == doctest::Approx(1.05).epsilon(1e-15));

    cfg.pow_l2 = 0.0;
    const double got = pow_grad_adjust_alpha(1.0, 0.9, cfg);
    CHECK(got == doctest::Approx(std::cos(0.45 * 3.14159265358979323846)).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.15643446504).epsilon(1e-9));
}

TEST_CASE("shrink multiplier is clamped and never flips sign") {
    OptimConfig cfg;
    cfg.pow_l2 = 0.0;
    cfg.cos_shrink_floor = 0.01;
    for (double a = -0.94; a <= 3.0; a += 0.07) {
        for (double g : {-2.0, -0.3, 0.4, 1.7}) {
            const double adj = pow_grad_adjust_alpha(g, a, cfg);
            CHECK(adj * g >= 0.0);                         // sign preserved
            CHECK(std::abs(adj) <= std::abs(g) + 1e-15);   // never amplified
            CHECK(std::abs(adj) >= 0.01 * std::abs(g) - 1e-15);
        }
    }
}

TEST_CASE("pow adjustment is the identity when disabled") {
    OptimConfig cfg;
    cfg.pow_l2 = 0.0;
    cfg.cos_shrink_threshold = std::numeric_limits<double>::infinity();
    for (double a : {-0.9, -0.3, 0.0, 1.5, 3.0})
        for (double g : {-1.0, 0.25, 3.0}) {
            CHECK(pow_grad_adjust_alpha(g, a, cfg) == g);
            CHECK(pow_grad_adjust_beta(g, a, cfg) == g);
        }
}

TEST_CASE("optimizer clamps pow params back into bounds") {
    OptimConfig cfg;
    cfg.learning_rate = 10.0; // deliberately huge step
    cfg.momentum = 0.0;
    cfg.pow_l2 = 0.0;
    SgdOptimizer opt(cfg);
    double alpha = 0.0, galpha = 1.0; // pushes alpha to -10 without the clamp
    double beta = 0.0, gbeta = -1.0;
    std::vector<ParamRef> params{{"a", ParamKind::PowAlpha, &alpha, &galpha, 1},
                                 {"b", ParamKind::PowBeta, &beta, &gbeta, 1}};
    opt.step(params);
    CHECK(alpha >= kAlphaMin);
    CHECK(alpha <= kAlphaMax);
    CHECK(beta >= kBetaMin);
}

TEST_CASE("config validation") {
    OptimConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.learning_rate = 0.1;
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.momentum = 0.9;
    cfg.cos_shrink_floor = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
