#include "pcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "pcnn/gemm.hpp"

namespace pcnn {

void Layer::load_state(const std::string& key, const Tensor&) {
    throw DataError("layer " + kind() + " has no state slot '" + key + "'");
}

namespace {

// psi over a contiguous block with sign-dependent (alpha, beta) selection.
void psi_apply(const double* x, std::size_t n, double ap, double bp, double an, double bn, double* y) {
    if (ap == 0.0 && bp == 0.0 && an == 0.0 && bn == 0.0) {
        std::memcpy(y, x, n * sizeof(double));
        return;
    }
    const double sp = bp + 1.0, sn = bn + 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        if (v >= 0.0) {
            y[i] = v == 0.0 ? 0.0 : (ap == 0.0 ? v : std::exp((ap + 1.0) * std::log(v))) / sp;
        } else {
            const double a = -v;
            y[i] = -(an == 0.0 ? a : std::exp((an + 1.0) * std::log(a))) / sn;
        }
    }
}

// Adjoint of psi_apply. grad_x accumulates; slot gradients accumulate into the
// positive/negative pair accumulators (the same pair when sign is not split).
void psi_apply_backward(const double* x, const double* y, const double* g, std::size_t n, double ap, double bp,
                        double an, double bn, double* grad_x, double& gap, double& gbp, double& gan, double& gbn,
                        bool want_param_grads) {
    const double isp = 1.0 / (bp + 1.0), isn = 1.0 / (bn + 1.0);
    const double a1p = ap + 1.0, a1n = an + 1.0;
    double la_p = 0.0, lb_p = 0.0, la_n = 0.0, lb_n = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xv = x[i], yv = y[i], gv = g[i];
        if (xv >= 0.0) {
            if (ap == 0.0)
                grad_x[i] += gv * isp;
            else
                grad_x[i] += xv == 0.0 ? 0.0 : a1p * gv * yv / xv;
            if (want_param_grads) {
                if (xv != 0.0) la_p += gv * yv * std::log(xv);
                lb_p += gv * yv;
            }
        } else {
            if (an == 0.0)
                grad_x[i] += gv * isn;
            else
                grad_x[i] += a1n * gv * yv / xv;
            if (want_param_grads) {
                la_n += gv * yv * std::log(-xv);
                lb_n += gv * yv;
            }
        }
    }
    if (want_param_grads) {
        gap += la_p;
        gbp += -lb_p * isp;
        gan += la_n;
        gbn += -lb_n * isn;
    }
}

Tensor vector_as_tensor(const std::vector<double>& v) {
    return Tensor({v.size()}, std::vector<double>(v.begin(), v.end()));
}

void tensor_into_vector(const Tensor& t, std::vector<double>& v) {
    if (t.size() != v.size()) throw DimError("state tensor size " + std::to_string(t.size()) + " != " + std::to_string(v.size()));
    std::copy(t.data(), t.data() + t.size(), v.begin());
}

std::size_t batch_of(const Tensor& x) {
    if (x.rank() < 2) throw DimError("layer input needs a batch dimension, got " + shape_str(x.shape()));
    return x.dim(0);
}

std::vector<std::size_t> item_shape(const Tensor& x) {
    return {x.shape().begin() + 1, x.shape().end()};
}

} // namespace

// ---------------------------------------------------------------- ConvLayer

ConvLayer::ConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw, int stride, int padding)
    : kernel_{Tensor({in_ch, out_ch, kh, kw}), stride, padding}, grad_weights_({in_ch, out_ch, kh, kw}) {
    kernel_.validate();
}

std::vector<std::size_t> ConvLayer::output_shape(const std::vector<std::size_t>& s) const {
    const ConvDims dm = conv_dims(s, kernel_);
    return {dm.d, dm.oh, dm.ow};
}

void ConvLayer::init_params(Rng& rng) {
    const double stddev = std::sqrt(2.0 / double(kernel_.in_channels() * kernel_.kh() * kernel_.kw()));
    for (std::size_t i = 0; i < kernel_.weights.size(); ++i) kernel_.weights[i] = rng.normal(0.0, stddev);
}

void ConvLayer::zero_grad() { grad_weights_.zero(); }

void ConvLayer::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", ParamKind::Weight, kernel_.weights.data(), grad_weights_.data(),
                   kernel_.weights.size()});
}

std::vector<std::pair<std::string, Tensor>> ConvLayer::state() const {
    return {{"weight", kernel_.weights}};
}

void ConvLayer::load_state(const std::string& key, const Tensor& t) {
    if (key != "weight") Layer::load_state(key, t);
    if (!t.same_shape(kernel_.weights)) throw DimError("conv weight shape mismatch");
    kernel_.weights = t;
}

std::string ConvLayer::manifest_line() const {
    std::ostringstream os;
    os << "conv in=" << kernel_.in_channels() << " out=" << kernel_.out_channels() << " kh=" << kernel_.kh()
       << " kw=" << kernel_.kw() << " stride=" << kernel_.stride << " pad=" << kernel_.padding;
    return os.str();
}

Tensor ConvLayer::forward(const Tensor& x, bool) {
    const ConvDims dm = conv_dims(item_shape(x), kernel_);
    const std::size_t batch = batch_of(x), K = dm.k(), P = dm.p();
    ws_.wmat.resize(dm.d * K);
    ws_.bcol.resize(K * P);
    gather_wmat(kernel_.weights, 0, dm.d, ws_.wmat.data());
    Tensor out({batch, dm.d, dm.oh, dm.ow});
    const std::size_t in_stride = dm.c * dm.h * dm.w, out_stride = dm.d * P;
    for (std::size_t b = 0; b < batch; ++b) {
        im2col(x.data() + b * in_stride, dm, kernel_.stride, kernel_.padding, ws_.bcol.data(), nullptr);
        gemm(ws_.wmat.data(), ws_.bcol.data(), out.data() + b * out_stride, dm.d, K, P);
    }
    cached_input_ = x;
    return out;
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
    const Tensor& x = cached_input_;
    const ConvDims dm = conv_dims(item_shape(x), kernel_);
    const std::size_t batch = batch_of(x), K = dm.k(), P = dm.p();
    if (grad_out.shape() != std::vector<std::size_t>{batch, dm.d, dm.oh, dm.ow})
        throw DimError("conv backward: grad shape " + shape_str(grad_out.shape()));
    ws_.wmat.resize(dm.d * K);
    ws_.wmat_t.resize(K * dm.d);
    ws_.pm.resize(P * K);
    ws_.gcol.resize(K * P);
    gather_wmat(kernel_.weights, 0, dm.d, ws_.wmat.data());
    transpose(ws_.wmat.data(), ws_.wmat_t.data(), dm.d, K);
    std::vector<double> gwmat(dm.d * K);
    Tensor grad_input(x.shape());
    const std::size_t in_stride = dm.c * dm.h * dm.w, out_stride = dm.d * P;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* go = grad_out.data() + b * out_stride;
        im2col(x.data() + b * in_stride, dm, kernel_.stride, kernel_.padding, nullptr, ws_.pm.data());
        gemm(go, ws_.pm.data(), gwmat.data(), dm.d, P, K);
        scatter_wmat_acc(gwmat.data(), 0, dm.d, grad_weights_);
        gemm(ws_.wmat_t.data(), go, ws_.gcol.data(), K, dm.d, P);
        col2im_acc(ws_.gcol.data(), dm, kernel_.stride, kernel_.padding, grad_input.data() + b * in_stride);
    }
    return grad_input;
}

// ------------------------------------------------------------- PowConvLayer

PowConvLayer::PowConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw, int stride,
                           int padding, PowMode mode, std::size_t groups, bool split_sign, bool skip_negative)
    : kernel_{Tensor({in_ch, out_ch, kh, kw}), stride, padding},
      pow_(PowParams::make(mode, groups, in_ch, out_ch, split_sign)),
      skip_negative_(skip_negative),
      grad_weights_({in_ch, out_ch, kh, kw}) {
    kernel_.validate();
    grad_alpha_.assign(pow_.alpha.size(), 0.0);
    grad_beta_.assign(pow_.beta.size(), 0.0);
}

std::vector<std::size_t> PowConvLayer::output_shape(const std::vector<std::size_t>& s) const {
    const ConvDims dm = conv_dims(s, kernel_);
    return {dm.d, dm.oh, dm.ow};
}

void PowConvLayer::init_params(Rng& rng) {
    const double stddev = std::sqrt(2.0 / double(kernel_.in_channels() * kernel_.kh() * kernel_.kw()));
    for (std::size_t i = 0; i < kernel_.weights.size(); ++i) kernel_.weights[i] = rng.normal(0.0, stddev);
    // alpha, beta stay at the identity start
}

void PowConvLayer::zero_grad() {
    grad_weights_.zero();
    std::fill(grad_alpha_.begin(), grad_alpha_.end(), 0.0);
    std::fill(grad_beta_.begin(), grad_beta_.end(), 0.0);
}

void PowConvLayer::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", ParamKind::Weight, kernel_.weights.data(), grad_weights_.data(),
                   kernel_.weights.size()});
    if (!freeze_pow_) {
        out.push_back({prefix + ".alpha", ParamKind::PowAlpha, pow_.alpha.data(), grad_alpha_.data(),
                       pow_.alpha.size()});
        out.push_back({prefix + ".beta", ParamKind::PowBeta, pow_.beta.data(), grad_beta_.data(), pow_.beta.size()});
    }
}

std::vector<std::pair<std::string, Tensor>> PowConvLayer::state() const {
    return {{"weight", kernel_.weights}, {"alpha", vector_as_tensor(pow_.alpha)}, {"beta", vector_as_tensor(pow_.beta)}};
}

void PowConvLayer::load_state(const std::string& key, const Tensor& t) {
    if (key == "weight") {
        if (!t.same_shape(kernel_.weights)) throw DimError("powconv weight shape mismatch");
        kernel_.weights = t;
    } else if (key == "alpha") {
        tensor_into_vector(t, pow_.alpha);
    } else if (key == "beta") {
        tensor_into_vector(t, pow_.beta);
    } else {
        Layer::load_state(key, t);
    }
}

std::string PowConvLayer::manifest_line() const {
    std::ostringstream os;
    os << "powconv mode=" << (pow_.mode == PowMode::InChannel ? "in" : "out") << " lambda=" << pow_.groups
       << " in=" << kernel_.in_channels() << " out=" << kernel_.out_channels() << " kh=" << kernel_.kh()
       << " kw=" << kernel_.kw() << " stride=" << kernel_.stride << " pad=" << kernel_.padding
       << " split_sign=" << (pow_.split_sign ? 1 : 0) << " skip_negative=" << (skip_negative_ ? 1 : 0);
    return os.str();
}

Tensor PowConvLayer::forward(const Tensor& x, bool) {
    pow_.validate(kernel_.in_channels(), kernel_.out_channels());
    cached_input_ = x;
    return pow_.mode == PowMode::InChannel ? forward_in(x) : forward_out(x);
}

Tensor PowConvLayer::backward(const Tensor& grad_out) {
    return pow_.mode == PowMode::InChannel ? backward_in(grad_out) : backward_out(grad_out);
}

// slot pair lookup: own-channel index own, group lambda; negative branch reads
// the table's second half when sign is split (and never when skip_negative)
namespace {
struct PsiPair {
    double ap, bp, an, bn;
};
} // namespace

static PsiPair slot_pair(const PowParams& pp, std::size_t own, std::size_t lambda, bool skip_negative) {
    const std::size_t s = pp.slot(own, lambda);
    PsiPair pr{pp.alpha[s], pp.beta[s], pp.alpha[s], pp.beta[s]};
    if (pp.split_sign && !skip_negative) {
        pr.an = pp.alpha[pp.slots() + s];
        pr.bn = pp.beta[pp.slots() + s];
    }
    return pr;
}

Tensor PowConvLayer::forward_in(const Tensor& x) {
    const ConvDims dm = conv_dims(item_shape(x), kernel_);
    const std::size_t batch = batch_of(x), K = dm.k(), P = dm.p();
    const std::size_t dg = dm.d / pow_.groups;
    ws_.wmat.resize(dm.d * K);
    ws_.bcol.resize(K * P);
    gather_wmat(kernel_.weights, 0, dm.d, ws_.wmat.data());
    psi_buf_.resize(dm.c * dm.h * dm.w);
    Tensor out({batch, dm.d, dm.oh, dm.ow});
    const std::size_t in_stride = dm.c * dm.h * dm.w, out_stride = dm.d * P, hw = dm.h * dm.w;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_stride;
        for (std::size_t lam = 0; lam < pow_.groups; ++lam) {
            for (std::size_t c = 0; c < dm.c; ++c) {
                const PsiPair pr = slot_pair(pow_, c, lam, skip_negative_);
                psi_apply(xb + c * hw, hw, pr.ap, pr.bp, pr.an, pr.bn, psi_buf_.data() + c * hw);
            }
            im2col(psi_buf_.data(), dm, kernel_.stride, kernel_.padding, ws_.bcol.data(), nullptr);
            gemm(ws_.wmat.data() + lam * dg * K, ws_.bcol.data(), out.data() + b * out_stride + lam * dg * P, dg, K,
                 P);
        }
    }
    return out;
}

Tensor PowConvLayer::backward_in(const Tensor& grad_out) {
    const Tensor& x = cached_input_;
    const ConvDims dm = conv_dims(item_shape(x), kernel_);
    const std::size_t batch = batch_of(x), K = dm.k(), P = dm.p();
    const std::size_t dg = dm.d / pow_.groups;
    if (grad_out.shape() != std::vector<std::size_t>{batch, dm.d, dm.oh, dm.ow})
        throw DimError("powconv backward: grad shape " + shape_str(grad_out.shape()));
    ws_.wmat.resize(dm.d * K);
    ws_.wmat_t.resize(K * dg);
    ws_.pm.resize(P * K);
    ws_.gcol.resize(K * P);
    gather_wmat(kernel_.weights, 0, dm.d, ws_.wmat.data());
    psi_buf_.resize(dm.c * dm.h * dm.w);
    grad_psi_buf_.resize(dm.c * dm.h * dm.w);
    std::vector<double> gwmat(dg * K);
    Tensor grad_input(x.shape());
    const std::size_t in_stride = dm.c * dm.h * dm.w, out_stride = dm.d * P, hw = dm.h * dm.w;
    const std::size_t S = pow_.slots();
    const bool want_pg = !freeze_pow_;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_stride;
        const double* go = grad_out.data() + b * out_stride;
        double* gx = grad_input.data() + b * in_stride;
        for (std::size_t lam = 0; lam < pow_.groups; ++lam) {
            for (std::size_t c = 0; c < dm.c; ++c) {
                const PsiPair pr = slot_pair(pow_, c, lam, skip_negative_);
                psi_apply(xb + c * hw, hw, pr.ap, pr.bp, pr.an, pr.bn, psi_buf_.data() + c * hw);
            }
            im2col(psi_buf_.data(), dm, kernel_.stride, kernel_.padding, nullptr, ws_.pm.data());
            gemm(go + lam * dg * P, ws_.pm.data(), gwmat.data(), dg, P, K);
            scatter_wmat_acc(gwmat.data(), lam * dg, (lam + 1) * dg, grad_weights_);

            transpose(ws_.wmat.data() + lam * dg * K, ws_.wmat_t.data(), dg, K);
            gemm(ws_.wmat_t.data(), go + lam * dg * P, ws_.gcol.data(), K, dg, P);
            std::fill(grad_psi_buf_.begin(), grad_psi_buf_.end(), 0.0);
            col2im_acc(ws_.gcol.data(), dm, kernel_.stride, kernel_.padding, grad_psi_buf_.data());

            for (std::size_t c = 0; c < dm.c; ++c) {
                const PsiPair pr = slot_pair(pow_, c, lam, skip_negative_);
                const std::size_t s = pow_.slot(c, lam);
                const std::size_t sn = pow_.split_sign && !skip_negative_ ? S + s : s;
                psi_apply_backward(xb + c * hw, psi_buf_.data() + c * hw, grad_psi_buf_.data() + c * hw, hw, pr.ap,
                                   pr.bp, pr.an, pr.bn, gx + c * hw, grad_alpha_[s], grad_beta_[s], grad_alpha_[sn],
                                   grad_beta_[sn], want_pg);
            }
        }
    }
    return grad_input;
}

Tensor PowConvLayer::forward_out(const Tensor& x) {
    const ConvDims dm = conv_dims(item_shape(x), kernel_);
    const std::size_t batch = batch_of(x), P = dm.p();
    const std::size_t kc = dm.kh * dm.kw;
    ConvDims dm1 = dm; // single input channel view
    dm1.c = 1;
    ws_.bcol.resize(kc * P);
    vbuf_.resize(dm.d * P);
    sbuf_.resize(P);
    Tensor out({batch, dm.d, dm.oh, dm.ow});
    const std::size_t in_stride = dm.c * dm.h * dm.w, out_stride = dm.d * P, hw = dm.h * dm.w;
    const double* w = kernel_.weights.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_stride;
        double* ob = out.data() + b * out_stride;
        std::fill(ob, ob + out_stride, 0.0);
        for (std::size_t c = 0; c < dm.c; ++c) {
            im2col(xb + c * hw, dm1, kernel_.stride, kernel_.padding, ws_.bcol.data(), nullptr);
            // weights[c, :, :, :] is already the [D x kc] matrix for channel c
            gemm(w + c * dm.d * kc, ws_.bcol.data(), vbuf_.data(), dm.d, kc, P);
            const std::size_t lam = pow_.group_of(c);
            for (std::size_t d = 0; d < dm.d; ++d) {
                const PsiPair pr = slot_pair(pow_, d, lam, skip_negative_);
                psi_apply(vbuf_.data() + d * P, P, pr.ap, pr.bp, pr.an, pr.bn, sbuf_.data());
                double* orow = ob + d * P;
                const double* srow = sbuf_.data();
                for (std::size_t p = 0; p < P; ++p) orow[p] += srow[p];
            }
        }
    }
    return out;
}

Tensor PowConvLayer::backward_out(const Tensor& grad_out) {
    const Tensor& x = cached_input_;
    const ConvDims dm = conv_dims(item_shape(x), kernel_);
    const std::size_t batch = batch_of(x), P = dm.p();
    const std::size_t kc = dm.kh * dm.kw;
    if (grad_out.shape() != std::vector<std::size_t>{batch, dm.d, dm.oh, dm.ow})
        throw DimError("powconv backward: grad shape " + shape_str(grad_out.shape()));
    ConvDims dm1 = dm;
    dm1.c = 1;
    ws_.bcol.resize(kc * P);
    ws_.pm.resize(P * kc);
    ws_.gcol.resize(kc * P);
    ws_.wmat_t.resize(kc * dm.d);
    vbuf_.resize(dm.d * P);
    gvbuf_.resize(dm.d * P);
    sbuf_.resize(P);
    std::vector<double> gw_c(dm.d * kc);
    Tensor grad_input(x.shape());
    const std::size_t in_stride = dm.c * dm.h * dm.w, out_stride = dm.d * P, hw = dm.h * dm.w;
    const double* w = kernel_.weights.data();
    double* gw = grad_weights_.data();
    const std::size_t S = pow_.slots();
    const bool want_pg = !freeze_pow_;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * in_stride;
        const double* go = grad_out.data() + b * out_stride;
        double* gx = grad_input.data() + b * in_stride;
        for (std::size_t c = 0; c < dm.c; ++c) {
            im2col(xb + c * hw, dm1, kernel_.stride, kernel_.padding, ws_.bcol.data(), ws_.pm.data());
            gemm(w + c * dm.d * kc, ws_.bcol.data(), vbuf_.data(), dm.d, kc, P);
            const std::size_t lam = pow_.group_of(c);
            std::fill(gvbuf_.begin(), gvbuf_.end(), 0.0);
            for (std::size_t d = 0; d < dm.d; ++d) {
                const PsiPair pr = slot_pair(pow_, d, lam, skip_negative_);
                psi_apply(vbuf_.data() + d * P, P, pr.ap, pr.bp, pr.an, pr.bn, sbuf_.data());
                const std::size_t s = pow_.slot(d, lam);
                const std::size_t sn = pow_.split_sign && !skip_negative_ ? S + s : s;
                psi_apply_backward(vbuf_.data() + d * P, sbuf_.data(), go + d * P, P, pr.ap, pr.bp, pr.an, pr.bn,
                                   gvbuf_.data() + d * P, grad_alpha_[s], grad_beta_[s], grad_alpha_[sn],
                                   grad_beta_[sn], want_pg);
            }
            gemm(gvbuf_.data(), ws_.pm.data(), gw_c.data(), dm.d, P, kc);
            double* gw_dst = gw + c * dm.d * kc;
            for (std::size_t t = 0; t < dm.d * kc; ++t) gw_dst[t] += gw_c[t];

            transpose(w + c * dm.d * kc, ws_.wmat_t.data(), dm.d, kc);
            gemm(ws_.wmat_t.data(), gvbuf_.data(), ws_.gcol.data(), kc, dm.d, P);
            col2im_acc(ws_.gcol.data(), dm1, kernel_.stride, kernel_.padding, gx + c * hw);
        }
    }
    return grad_input;
}

// ----------------------------------------------------------- BatchNormLayer

BatchNormLayer::BatchNormLayer(std::size_t features, bool affine) : features_(features), affine_(affine) {
    gamma_.assign(features, 1.0);
    delta_.assign(features, 0.0);
    grad_gamma_.assign(features, 0.0);
    grad_delta_.assign(features, 0.0);
    running_mean_.assign(features, 0.0);
    running_var_.assign(features, 1.0);
}

std::vector<std::size_t> BatchNormLayer::output_shape(const std::vector<std::size_t>& s) const {
    if (s.empty() || s[0] != features_)
        throw DimError("batchnorm expects " + std::to_string(features_) + " features, got " + shape_str(s));
    return s;
}

void BatchNormLayer::zero_grad() {
    std::fill(grad_gamma_.begin(), grad_gamma_.end(), 0.0);
    std::fill(grad_delta_.begin(), grad_delta_.end(), 0.0);
}

void BatchNormLayer::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    if (!affine_) return;
    out.push_back({prefix + ".gamma", ParamKind::BnGamma, gamma_.data(), grad_gamma_.data(), gamma_.size()});
    out.push_back({prefix + ".delta", ParamKind::BnBeta, delta_.data(), grad_delta_.data(), delta_.size()});
}

std::vector<std::pair<std::string, Tensor>> BatchNormLayer::state() const {
    std::vector<std::pair<std::string, Tensor>> s{{"running_mean", vector_as_tensor(running_mean_)},
                                                  {"running_var", vector_as_tensor(running_var_)}};
    if (affine_) {
        s.emplace_back("gamma", vector_as_tensor(gamma_));
        s.emplace_back("delta", vector_as_tensor(delta_));
    }
    return s;
}

void BatchNormLayer::load_state(const std::string& key, const Tensor& t) {
    if (key == "running_mean")
        tensor_into_vector(t, running_mean_);
    else if (key == "running_var")
        tensor_into_vector(t, running_var_);
    else if (key == "gamma" && affine_)
        tensor_into_vector(t, gamma_);
    else if (key == "delta" && affine_)
        tensor_into_vector(t, delta_);
    else
        Layer::load_state(key, t);
}

std::string BatchNormLayer::manifest_line() const {
    return "batchnorm features=" + std::to_string(features_) + " affine=" + (affine_ ? "1" : "0");
}

Tensor BatchNormLayer::forward(const Tensor& x, bool train) {
    const std::size_t batch = batch_of(x);
    const bool spatial = x.rank() == 4;
    if (!spatial && x.rank() != 2) throw DimError("batchnorm input must be rank 2 or 4");
    const std::size_t f_n = spatial ? x.dim(1) : x.dim(1);
    if (f_n != features_) throw DimError("batchnorm feature count mismatch");
    const std::size_t hw = spatial ? x.dim(2) * x.dim(3) : 1;
    per_feature_ = batch * hw;
    if (train && batch < 2) throw ConfigError("batchnorm needs batch >= 2 in train mode");
    train_mode_ = train;

    std::vector<double> mean(features_, 0.0), var(features_, 0.0);
    if (train) {
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t f = 0; f < features_; ++f) {
                const double* p = x.data() + (b * features_ + f) * hw;
                double s = 0.0;
                for (std::size_t t = 0; t < hw; ++t) s += p[t];
                mean[f] += s;
            }
        for (double& m : mean) m /= double(per_feature_);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t f = 0; f < features_; ++f) {
                const double* p = x.data() + (b * features_ + f) * hw;
                double s = 0.0;
                for (std::size_t t = 0; t < hw; ++t) {
                    const double d = p[t] - mean[f];
                    s += d * d;
                }
                var[f] += s;
            }
        for (double& v : var) v /= double(per_feature_);
        for (std::size_t f = 0; f < features_; ++f) {
            running_mean_[f] = kMomentum * running_mean_[f] + (1.0 - kMomentum) * mean[f];
            running_var_[f] = kMomentum * running_var_[f] + (1.0 - kMomentum) * var[f];
        }
    } else {
        mean = running_mean_;
        var = running_var_;
    }
    inv_std_.resize(features_);
    for (std::size_t f = 0; f < features_; ++f) inv_std_[f] = 1.0 / std::sqrt(var[f] + kEps);

    x_hat_ = Tensor(x.shape());
    Tensor out(x.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t f = 0; f < features_; ++f) {
            const double* p = x.data() + (b * features_ + f) * hw;
            double* xh = x_hat_.data() + (b * features_ + f) * hw;
            double* o = out.data() + (b * features_ + f) * hw;
            const double mu = mean[f], is = inv_std_[f];
            const double g = affine_ ? gamma_[f] : 1.0, dl = affine_ ? delta_[f] : 0.0;
            for (std::size_t t = 0; t < hw; ++t) {
                xh[t] = (p[t] - mu) * is;
                o[t] = g * xh[t] + dl;
            }
        }
    return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(x_hat_)) throw DimError("batchnorm backward shape mismatch");
    const std::size_t batch = grad_out.dim(0);
    const std::size_t hw = grad_out.rank() == 4 ? grad_out.dim(2) * grad_out.dim(3) : 1;
    const double m = double(per_feature_);

    std::vector<double> sum_g(features_, 0.0), sum_gx(features_, 0.0);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t f = 0; f < features_; ++f) {
            const double* g = grad_out.data() + (b * features_ + f) * hw;
            const double* xh = x_hat_.data() + (b * features_ + f) * hw;
            double sg = 0.0, sgx = 0.0;
            for (std::size_t t = 0; t < hw; ++t) {
                sg += g[t];
                sgx += g[t] * xh[t];
            }
            sum_g[f] += sg;
            sum_gx[f] += sgx;
        }
    if (affine_)
        for (std::size_t f = 0; f < features_; ++f) {
            grad_gamma_[f] += sum_gx[f];
            grad_delta_[f] += sum_g[f];
        }

    Tensor grad_input(grad_out.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t f = 0; f < features_; ++f) {
            const double* g = grad_out.data() + (b * features_ + f) * hw;
            const double* xh = x_hat_.data() + (b * features_ + f) * hw;
            double* gi = grad_input.data() + (b * features_ + f) * hw;
            const double gm = affine_ ? gamma_[f] : 1.0;
            const double is = inv_std_[f];
            if (train_mode_) {
                const double mg = gm * sum_g[f] / m, mgx = gm * sum_gx[f] / m;
                for (std::size_t t = 0; t < hw; ++t) gi[t] = is * (gm * g[t] - mg - xh[t] * mgx);
            } else {
                for (std::size_t t = 0; t < hw; ++t) gi[t] = is * gm * g[t];
            }
        }
    return grad_input;
}

// ---------------------------------------------------------- ActivationLayer

std::string ActivationLayer::kind() const {
    switch (act_) {
    case ActKind::ReLU: return "relu";
    case ActKind::Tanh: return "tanh";
    default: return "softsign";
    }
}

Tensor ActivationLayer::forward(const Tensor& x, bool) {
    Tensor out(x.shape());
    const std::size_t n = x.size();
    switch (act_) {
    case ActKind::ReLU:
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
        cache_ = x;
        break;
    case ActKind::Tanh:
        for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
        cache_ = out;
        break;
    case ActKind::Softsign:
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / (1.0 + std::abs(x[i]));
        cache_ = x;
        break;
    }
    return out;
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(cache_)) throw DimError("activation backward shape mismatch");
    Tensor grad(grad_out.shape());
    const std::size_t n = grad.size();
    switch (act_) {
    case ActKind::ReLU:
        for (std::size_t i = 0; i < n; ++i) grad[i] = cache_[i] > 0.0 ? grad_out[i] : 0.0;
        break;
    case ActKind::Tanh:
        for (std::size_t i = 0; i < n; ++i) grad[i] = grad_out[i] * (1.0 - cache_[i] * cache_[i]);
        break;
    case ActKind::Softsign:
        for (std::size_t i = 0; i < n; ++i) {
            const double d = 1.0 + std::abs(cache_[i]);
            grad[i] = grad_out[i] / (d * d);
        }
        break;
    }
    return grad;
}

// -------------------------------------------------------------- LinearLayer

LinearLayer::LinearLayer(std::size_t in, std::size_t out, bool bias)
    : in_(in), out_(out), has_bias_(bias), weights_({in, out}), bias_({out}), grad_weights_({in, out}),
      grad_bias_({out}) {}

std::vector<std::size_t> LinearLayer::output_shape(const std::vector<std::size_t>& s) const {
    if (s.size() != 1 || s[0] != in_)
        throw DimError("linear expects flat input of " + std::to_string(in_) + ", got " + shape_str(s));
    return {out_};
}

void LinearLayer::init_params(Rng& rng) {
    const double stddev = std::sqrt(2.0 / double(in_));
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] = rng.normal(0.0, stddev);
    bias_.zero();
}

void LinearLayer::zero_grad() {
    grad_weights_.zero();
    grad_bias_.zero();
}

void LinearLayer::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", ParamKind::Weight, weights_.data(), grad_weights_.data(), weights_.size()});
    if (has_bias_) out.push_back({prefix + ".bias", ParamKind::Bias, bias_.data(), grad_bias_.data(), bias_.size()});
}

std::vector<std::pair<std::string, Tensor>> LinearLayer::state() const {
    std::vector<std::pair<std::string, Tensor>> s{{"weight", weights_}};
    if (has_bias_) s.emplace_back("bias", bias_);
    return s;
}

void LinearLayer::load_state(const std::string& key, const Tensor& t) {
    if (key == "weight") {
        if (!t.same_shape(weights_)) throw DimError("linear weight shape mismatch");
        weights_ = t;
    } else if (key == "bias" && has_bias_) {
        if (!t.same_shape(bias_)) throw DimError("linear bias shape mismatch");
        bias_ = t;
    } else {
        Layer::load_state(key, t);
    }
}

std::string LinearLayer::manifest_line() const {
    return "linear in=" + std::to_string(in_) + " out=" + std::to_string(out_) + " bias=" + (has_bias_ ? "1" : "0");
}

Tensor LinearLayer::forward(const Tensor& x, bool) {
    if (x.rank() != 2 || x.dim(1) != in_) throw DimError("linear forward: input " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0);
    Tensor out({batch, out_});
    gemm(x.data(), weights_.data(), out.data(), batch, in_, out_);
    if (has_bias_)
        for (std::size_t b = 0; b < batch; ++b) {
            double* row = out.data() + b * out_;
            for (std::size_t j = 0; j < out_; ++j) row[j] += bias_[j];
        }
    cached_input_ = x;
    return out;
}

Tensor LinearLayer::backward(const Tensor& grad_out) {
    const std::size_t batch = cached_input_.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != batch || grad_out.dim(1) != out_)
        throw DimError("linear backward: grad " + shape_str(grad_out.shape()));
    // dW = x^T * g
    xt_.resize(in_ * batch);
    transpose(cached_input_.data(), xt_.data(), batch, in_);
    std::vector<double> gw(in_ * out_);
    gemm(xt_.data(), grad_out.data(), gw.data(), in_, batch, out_);
    for (std::size_t i = 0; i < gw.size(); ++i) grad_weights_[i] += gw[i];
    if (has_bias_)
        for (std::size_t b = 0; b < batch; ++b) {
            const double* row = grad_out.data() + b * out_;
            for (std::size_t j = 0; j < out_; ++j) grad_bias_[j] += row[j];
        }
    // dx = g * W^T
    wt_.resize(out_ * in_);
    transpose(weights_.data(), wt_.data(), in_, out_);
    Tensor grad_input({batch, in_});
    gemm(grad_out.data(), wt_.data(), grad_input.data(), batch, out_, in_);
    return grad_input;
}

// -------------------------------------------------------------- MaxPoolLayer

std::vector<std::size_t> MaxPoolLayer::output_shape(const std::vector<std::size_t>& s) const {
    if (s.size() != 3) throw DimError("maxpool expects [C,H,W] items");
    if (s[1] % 2 != 0 || s[2] % 2 != 0) throw DimError("maxpool needs even spatial dims");
    return {s[0], s[1] / 2, s[2] / 2};
}

Tensor MaxPoolLayer::forward(const Tensor& x, bool) {
    const std::size_t batch = batch_of(x);
    in_item_shape_ = item_shape(x);
    const auto out_item = output_shape(in_item_shape_);
    Tensor out({batch, out_item[0], out_item[1], out_item[2]});
    argmax_.assign(batch, {});
    const std::size_t in_stride = shape_product(in_item_shape_), out_stride = shape_product(out_item);
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor item(in_item_shape_, std::vector<double>(x.data() + b * in_stride, x.data() + (b + 1) * in_stride));
        MaxPoolResult r = maxpool2d(item);
        std::copy(r.output.data(), r.output.data() + out_stride, out.data() + b * out_stride);
        argmax_[b] = std::move(r.argmax);
    }
    return out;
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
    const std::size_t batch = grad_out.dim(0);
    const std::size_t in_stride = shape_product(in_item_shape_);
    const std::size_t out_stride = grad_out.size() / batch;
    std::vector<std::size_t> shape = in_item_shape_;
    shape.insert(shape.begin(), batch);
    Tensor grad_input(shape);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* go = grad_out.data() + b * out_stride;
        double* gi = grad_input.data() + b * in_stride;
        for (std::size_t o = 0; o < out_stride; ++o) gi[argmax_[b][o]] += go[o];
    }
    return grad_input;
}

// -------------------------------------------------------------- FlattenLayer

std::vector<std::size_t> FlattenLayer::output_shape(const std::vector<std::size_t>& s) const {
    return {shape_product(s)};
}

Tensor FlattenLayer::forward(const Tensor& x, bool) {
    in_item_shape_ = item_shape(x);
    return Tensor({x.dim(0), shape_product(in_item_shape_)},
                  std::vector<double>(x.data(), x.data() + x.size()));
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
    std::vector<std::size_t> shape = in_item_shape_;
    shape.insert(shape.begin(), grad_out.dim(0));
    return Tensor(shape, std::vector<double>(grad_out.data(), grad_out.data() + grad_out.size()));
}

// ------------------------------------------------------------------ PsiLayer

PsiLayer::PsiLayer(bool split_sign) : split_sign_(split_sign) {
    const std::size_t n = split_sign ? 2 : 1;
    alpha_.assign(n, 0.0);
    beta_.assign(n, 0.0);
    grad_alpha_.assign(n, 0.0);
    grad_beta_.assign(n, 0.0);
}

void PsiLayer::zero_grad() {
    std::fill(grad_alpha_.begin(), grad_alpha_.end(), 0.0);
    std::fill(grad_beta_.begin(), grad_beta_.end(), 0.0);
}

void PsiLayer::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".alpha", ParamKind::PowAlpha, alpha_.data(), grad_alpha_.data(), alpha_.size()});
    out.push_back({prefix + ".beta", ParamKind::PowBeta, beta_.data(), grad_beta_.data(), beta_.size()});
}

std::vector<std::pair<std::string, Tensor>> PsiLayer::state() const {
    return {{"alpha", vector_as_tensor(alpha_)}, {"beta", vector_as_tensor(beta_)}};
}

void PsiLayer::load_state(const std::string& key, const Tensor& t) {
    if (key == "alpha")
        tensor_into_vector(t, alpha_);
    else if (key == "beta")
        tensor_into_vector(t, beta_);
    else
        Layer::load_state(key, t);
}

std::string PsiLayer::manifest_line() const { return std::string("psi split_sign=") + (split_sign_ ? "1" : "0"); }

Tensor PsiLayer::forward(const Tensor& x, bool) {
    const double an = split_sign_ ? alpha_[1] : alpha_[0];
    const double bn = split_sign_ ? beta_[1] : beta_[0];
    Tensor out(x.shape());
    psi_apply(x.data(), x.size(), alpha_[0], beta_[0], an, bn, out.data());
    cached_input_ = x;
    cached_output_ = out;
    return out;
}

Tensor PsiLayer::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(cached_input_)) throw DimError("psi backward shape mismatch");
    const std::size_t ni = split_sign_ ? 1 : 0;
    const double an = alpha_[ni], bn = beta_[ni];
    Tensor grad(grad_out.shape());
    grad.zero();
    psi_apply_backward(cached_input_.data(), cached_output_.data(), grad_out.data(), grad_out.size(), alpha_[0],
                       beta_[0], an, bn, grad.data(), grad_alpha_[0], grad_beta_[0], grad_alpha_[ni], grad_beta_[ni],
                       true);
    return grad;
}

// ------------------------------------------------------------------- losses

LossOut softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw DimError("softmax_cross_entropy expects [batch, classes]");
    const std::size_t batch = logits.dim(0), k_n = logits.dim(1);
    if (labels.size() != batch) throw DimError("label count != batch");
    LossOut out;
    out.grad = Tensor(logits.shape());
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        if (label < 0 || std::size_t(label) >= k_n)
            throw DataError("label " + std::to_string(label) + " out of range [0," + std::to_string(k_n) + ")");
        const double* row = logits.data() + b * k_n;
        double mx = row[0];
        for (std::size_t j = 1; j < k_n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k_n; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z) + mx;
        total += logz - row[std::size_t(label)];
        double* grow = out.grad.data() + b * k_n;
        for (std::size_t j = 0; j < k_n; ++j) grow[j] = std::exp(row[j] - logz) / double(batch);
        grow[std::size_t(label)] -= 1.0 / double(batch);
    }
    out.value = total / double(batch);
    return out;
}

LossOut mean_squared_error(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw DimError("mse: shapes differ");
    LossOut out;
    out.grad = Tensor(pred.shape());
    const double inv_n = 1.0 / double(pred.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        total += d * d;
        out.grad[i] = 2.0 * d * inv_n;
    }
    out.value = total * inv_n;
    return out;
}

} // namespace pcnn
