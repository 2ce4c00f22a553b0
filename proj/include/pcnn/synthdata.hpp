#pragma once

#include <cstdint>
#include <vector>

#include "pcnn/tensor.hpp"

namespace pcnn {

/// Generalized normal distribution (shape kappa, position xi, scale).
/// kappa = 0 is the plain normal; kappa != 0 skews and bounds one tail.
/// (The distribution's own scale symbol collides with the power exponent's
/// alpha, hence "scale".)
struct GndConfig {
    double kappa = 0.0;
    double xi = 0.0;
    double scale = 1.0;

    void validate() const;
};

/// Inverse-transform sampling: x = xi + scale * (1 - exp(-kappa Z)) / kappa
/// with Z standard normal (x = xi + scale * Z at kappa = 0). Deterministic
/// given the seed.
std::vector<double> gnd_sample(const GndConfig& cfg, std::size_t n, std::uint64_t seed);

/// label = sum_{n < N} 2^n * 1(x_n >= 0)
int assign_label(const double* x, std::size_t len, std::size_t determinant);

struct SyntheticClassSpec {
    std::size_t total_features = 128;   // M
    std::size_t determinant = 1;        // N; 2^N classes
    std::size_t train_count = 10000;
    std::size_t test_count = 10000;
    std::uint64_t seed = 0;
};

struct ClassDataset {
    Tensor features; // [count, M]
    std::vector<int> labels;
    std::vector<double> kappas; // per-feature shape parameters used
};

struct ClassDataPair {
    ClassDataset train, test;
};

/// Each feature of each sample is GND(xi=0, scale=1) with a per-feature kappa
/// drawn from U(-1,1). diverged=false shares one kappa draw between train and
/// test; diverged=true draws them independently.
ClassDataPair make_classification_dataset(const SyntheticClassSpec& spec, bool diverged);

struct RegressionDataset {
    Tensor x; // [n, M], U(0,1)
    Tensor y; // y_m = x_m ^ exponent_m
    std::vector<double> exponents; // U(0,2), one draw per dataset
};

RegressionDataset make_power_regression_dataset(std::size_t m_features, std::size_t n_samples, std::uint64_t seed);
/// Control variant with every exponent forced to 1 (y == x).
RegressionDataset make_identity_regression_dataset(std::size_t m_features, std::size_t n_samples, std::uint64_t seed);

struct RatioStats {
    std::vector<double> per_sample; // percent
    double mean = 0.0;
    double stddev = 0.0;
};

/// R_i = sum_m |pred - truth| / sum_m truth, in percent.
RatioStats ratio_metric(const Tensor& pred, const Tensor& truth);

struct Histogram {
    std::vector<double> edges; // bins + 1
    std::vector<double> probs; // normalized counts, sum to 1
};

Histogram make_histogram(const std::vector<double>& samples, double lo, double hi, std::size_t bins);

struct DistStats {
    double mean = 0.0;
    double variance = 0.0;        // population
    double skewness = 0.0;        // m3 / m2^1.5
    double excess_kurtosis = 0.0; // m4 / m2^2 - 3
    Histogram hist;
    std::size_t count = 0;
};

DistStats dist_moments(const std::vector<double>& samples, std::size_t bins = 100);

/// JSD(p||q) = KL(p||m)/2 + KL(q||m)/2 with m = (p+q)/2, natural log.
/// Symmetric, bounded by ln 2. Requires identical bin edges.
double js_divergence(const Histogram& p, const Histogram& q);

struct KsResult {
    double statistic = 0.0;
    double critical = 0.0;
    bool pass = false;
};

/// One-sample Kolmogorov–Smirnov test against the standard normal CDF,
/// asymptotic critical value. Supported significances: 0.01, 0.05.
KsResult ks_test_standard_normal(std::vector<double> samples, double significance = 0.01);

} // namespace pcnn
