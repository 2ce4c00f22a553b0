#include "pcnn/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "pcnn/rng.hpp"

namespace pcnn {

void GndConfig::validate() const {
    if (!(scale > 0.0)) throw ConfigError("gnd scale must be > 0");
    if (std::abs(kappa) > 1.0) throw ConfigError("|kappa| must be <= 1 here, got " + std::to_string(kappa));
}

namespace {

inline double gnd_draw(const GndConfig& cfg, Rng& rng) {
    const double z = rng.normal();
    if (cfg.kappa == 0.0) return cfg.xi + cfg.scale * z;
    return cfg.xi + cfg.scale * (1.0 - std::exp(-cfg.kappa * z)) / cfg.kappa;
}

} // namespace

std::vector<double> gnd_sample(const GndConfig& cfg, std::size_t n, std::uint64_t seed) {
    cfg.validate();
    if (n < 1) throw ConfigError("sample count must be >= 1");
    Rng rng = Rng::stream(seed, "gnd");
    std::vector<double> out(n);
    for (double& v : out) v = gnd_draw(cfg, rng);
    return out;
}

int assign_label(const double* x, std::size_t len, std::size_t determinant) {
    if (len < determinant) throw DimError("feature vector shorter than determinant count");
    int label = 0;
    for (std::size_t n = 0; n < determinant; ++n)
        if (x[n] >= 0.0) label += 1 << n;
    return label;
}

namespace {

std::vector<double> draw_kappas(std::uint64_t seed, const std::string& name, std::size_t m) {
    Rng rng = Rng::stream(seed, name);
    std::vector<double> k(m);
    for (double& v : k) v = rng.uniform(-1.0, 1.0);
    return k;
}

ClassDataset fill_set(const std::vector<double>& kappas, std::size_t count, std::size_t determinant,
                      std::uint64_t seed, const std::string& stream_name) {
    const std::size_t m = kappas.size();
    ClassDataset ds;
    ds.kappas = kappas;
    ds.features = Tensor({count, m});
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = Rng::stream(seed, stream_name, i);
        double* row = ds.features.data() + i * m;
        for (std::size_t f = 0; f < m; ++f) {
            GndConfig cfg{kappas[f], 0.0, 1.0};
            row[f] = gnd_draw(cfg, rng);
        }
        ds.labels[i] = assign_label(row, m, determinant);
    }
    return ds;
}

} // namespace

ClassDataPair make_classification_dataset(const SyntheticClassSpec& spec, bool diverged) {
    if (spec.determinant > spec.total_features) throw ConfigError("N must not exceed M");
    const std::size_t m = spec.total_features;
    std::vector<double> k_train, k_test;
    if (diverged) {
        k_train = draw_kappas(spec.seed, "kappa.train", m);
        k_test = draw_kappas(spec.seed, "kappa.test", m);
    } else {
        k_train = draw_kappas(spec.seed, "kappa.shared", m);
        k_test = k_train;
    }
    ClassDataPair pair;
    pair.train = fill_set(k_train, spec.train_count, spec.determinant, spec.seed, "train.sample");
    pair.test = fill_set(k_test, spec.test_count, spec.determinant, spec.seed, "test.sample");
    return pair;
}

namespace {

RegressionDataset fill_regression(std::size_t m, std::size_t n, std::uint64_t seed, bool identity) {
    RegressionDataset ds;
    ds.exponents.resize(m);
    if (identity) {
        std::fill(ds.exponents.begin(), ds.exponents.end(), 1.0);
    } else {
        Rng rng = Rng::stream(seed, "exponents");
        for (double& e : ds.exponents) e = rng.uniform(0.0, 2.0);
    }
    ds.x = Tensor({n, m});
    ds.y = Tensor({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::stream(seed, "regression.sample", i);
        double* xr = ds.x.data() + i * m;
        double* yr = ds.y.data() + i * m;
        for (std::size_t f = 0; f < m; ++f) {
            xr[f] = rng.uniform();
            yr[f] = identity ? xr[f] : std::pow(xr[f], ds.exponents[f]);
        }
    }
    return ds;
}

} // namespace

RegressionDataset make_power_regression_dataset(std::size_t m, std::size_t n, std::uint64_t seed) {
    return fill_regression(m, n, seed, false);
}

RegressionDataset make_identity_regression_dataset(std::size_t m, std::size_t n, std::uint64_t seed) {
    return fill_regression(m, n, seed, true);
}

RatioStats ratio_metric(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth) || pred.rank() != 2) throw DimError("ratio_metric expects matching [n, M] tensors");
    const std::size_t n = pred.dim(0), m = pred.dim(1);
    RatioStats rs;
    rs.per_sample.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* pr = pred.data() + i * m;
        const double* tr = truth.data() + i * m;
        double err = 0.0, mass = 0.0;
        for (std::size_t f = 0; f < m; ++f) {
            err += std::abs(pr[f] - tr[f]);
            mass += tr[f];
        }
        if (!(mass > 0.0)) throw DataError("truth row " + std::to_string(i) + " has non-positive sum");
        rs.per_sample[i] = 100.0 * err / mass;
    }
    double s = 0.0;
    for (double v : rs.per_sample) s += v;
    rs.mean = s / double(n);
    double var = 0.0;
    for (double v : rs.per_sample) var += (v - rs.mean) * (v - rs.mean);
    rs.stddev = std::sqrt(var / double(n));
    return rs;
}

Histogram make_histogram(const std::vector<double>& samples, double lo, double hi, std::size_t bins) {
    if (bins == 0) throw ConfigError("histogram needs >= 1 bin");
    if (!(hi > lo)) hi = lo + 1.0; // degenerate range: single spike bin
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * double(i) / double(bins);
    h.probs.assign(bins, 0.0);
    const double inv_w = double(bins) / (hi - lo);
    for (double v : samples) {
        if (v < lo || v > hi) continue;
        std::size_t b = v >= hi ? bins - 1 : std::size_t((v - lo) * inv_w);
        if (b >= bins) b = bins - 1;
        h.probs[b] += 1.0;
    }
    double total = 0.0;
    for (double c : h.probs) total += c;
    if (total > 0.0)
        for (double& c : h.probs) c /= total;
    return h;
}

DistStats dist_moments(const std::vector<double>& samples, std::size_t bins) {
    if (samples.size() < 4) throw DataError("need >= 4 samples for standardized moments");
    const double n = double(samples.size());
    DistStats st;
    st.count = samples.size();
    for (double v : samples) st.mean += v;
    st.mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : samples) {
        const double d = v - st.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    st.variance = m2;
    if (!(m2 > 0.0)) throw DataError("zero variance: skewness/kurtosis undefined");
    st.skewness = m3 / std::pow(m2, 1.5);
    st.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    st.hist = make_histogram(samples, *mn, *mx, bins);
    return st;
}

double js_divergence(const Histogram& p, const Histogram& q) {
    if (p.edges != q.edges) throw DimError("js_divergence: histograms have different bin edges");
    if (p.probs.size() != q.probs.size()) throw DimError("js_divergence: bin count mismatch");
    // the two KL halves accumulate separately so JSD(p,q) == JSD(q,p) exactly
    double kl_p = 0.0, kl_q = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        const double pi = p.probs[i], qi = q.probs[i];
        const double mi = 0.5 * (pi + qi);
        if (pi > 0.0) kl_p += pi * std::log(pi / mi);
        if (qi > 0.0) kl_q += qi * std::log(qi / mi);
    }
    const double jsd = 0.5 * kl_p + 0.5 * kl_q;
    return jsd < 0.0 ? 0.0 : jsd;
}

KsResult ks_test_standard_normal(std::vector<double> samples, double significance) {
    if (samples.empty()) throw DataError("KS test needs samples");
    std::sort(samples.begin(), samples.end());
    const double n = double(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-samples[i] / 1.4142135623730951);
        d = std::max(d, std::abs(double(i) / n - cdf));
        d = std::max(d, std::abs(double(i + 1) / n - cdf));
    }
    double k;
    if (significance == 0.01)
        k = 1.6276236115189502; // asymptotic Kolmogorov quantile
    else if (significance == 0.05)
        k = 1.3580986393225505;
    else
        throw ConfigError("unsupported KS significance");
    KsResult r;
    r.statistic = d;
    r.critical = k / std::sqrt(n);
    r.pass = d < r.critical;
    return r;
}

} // namespace pcnn
