#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pcnn/conv.hpp"
#include "pcnn/powfn.hpp"
#include "pcnn/rng.hpp"
#include "pcnn/tensor.hpp"

namespace pcnn {

enum class ParamKind { Weight, Bias, BnGamma, BnBeta, PowAlpha, PowBeta };

/// Flat view of one trainable parameter array and its gradient accumulator.
struct ParamRef {
    std::string name;
    ParamKind kind;
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t n = 0;
};

/// One differentiable stage. forward() caches whatever backward() needs;
/// backward() returns the gradient w.r.t. the layer input and accumulates
/// parameter gradients (cleared by zero_grad()). Inputs carry a leading
/// batch dimension.
class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const = 0;
    virtual std::string kind() const = 0;
    virtual std::string manifest_line() const { return kind(); }

    virtual void init_params(Rng&) {}
    virtual void zero_grad() {}
    virtual void collect_params(std::vector<ParamRef>&, const std::string&) {}

    /// Persistent (non-gradient) state for checkpoints, keyed by suffix.
    virtual std::vector<std::pair<std::string, Tensor>> state() const { return {}; }
    virtual void load_state(const std::string& key, const Tensor& t);
};

class ConvLayer : public Layer {
public:
    ConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw, int stride, int padding);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const override;
    std::string kind() const override { return "conv"; }
    std::string manifest_line() const override;
    void init_params(Rng& rng) override;
    void zero_grad() override;
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
    std::vector<std::pair<std::string, Tensor>> state() const override;
    void load_state(const std::string& key, const Tensor& t) override;

    ConvKernel& kernel() { return kernel_; }

private:
    ConvKernel kernel_;
    Tensor grad_weights_;
    Tensor cached_input_;
    ConvWorkspace ws_;
};

/// Convolution with the learnable power map fused in. InChannel applies psi to
/// the input feature map per (input channel, output group) before the kernel;
/// OutChannel applies psi to each single-channel convolution before the sum
/// over input channels.
class PowConvLayer : public Layer {
public:
    PowConvLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kh, std::size_t kw, int stride, int padding,
                 PowMode mode, std::size_t groups, bool split_sign = false, bool skip_negative = false);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const override;
    std::string kind() const override { return "powconv"; }
    std::string manifest_line() const override;
    void init_params(Rng& rng) override;
    void zero_grad() override;
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
    std::vector<std::pair<std::string, Tensor>> state() const override;
    void load_state(const std::string& key, const Tensor& t) override;

    ConvKernel& kernel() { return kernel_; }
    PowParams& pow() { return pow_; }
    const PowParams& pow() const { return pow_; }
    std::vector<double>& grad_alpha() { return grad_alpha_; }
    std::vector<double>& grad_beta() { return grad_beta_; }
    bool& freeze_pow() { return freeze_pow_; }

private:
    Tensor forward_in(const Tensor& x);
    Tensor forward_out(const Tensor& x);
    Tensor backward_in(const Tensor& grad_out);
    Tensor backward_out(const Tensor& grad_out);

    ConvKernel kernel_;
    PowParams pow_;
    bool skip_negative_ = false;
    bool freeze_pow_ = false; // exclude (alpha, beta) from updates; Base-equivalence runs
    Tensor grad_weights_;
    std::vector<double> grad_alpha_, grad_beta_;
    Tensor cached_input_;
    ConvWorkspace ws_;
    std::vector<double> psi_buf_, grad_psi_buf_, vbuf_, gvbuf_, sbuf_;
};

class BatchNormLayer : public Layer {
public:
    BatchNormLayer(std::size_t features, bool affine);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const override;
    std::string kind() const override { return "batchnorm"; }
    std::string manifest_line() const override;
    void init_params(Rng&) override {}
    void zero_grad() override;
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
    std::vector<std::pair<std::string, Tensor>> state() const override;
    void load_state(const std::string& key, const Tensor& t) override;

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.9;

private:
    std::size_t features_;
    bool affine_;
    std::vector<double> gamma_, delta_, grad_gamma_, grad_delta_;
    std::vector<double> running_mean_, running_var_;
    // cache
    Tensor x_hat_;
    std::vector<double> inv_std_;
    bool train_mode_ = false;
    std::size_t per_feature_ = 0; // elements averaged per feature
};

enum class ActKind { ReLU, Tanh, Softsign };

class ActivationLayer : public Layer {
public:
    explicit ActivationLayer(ActKind k) : act_(k) {}

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& s) const override { return s; }
    std::string kind() const override;

    ActKind act() const { return act_; }

private:
    ActKind act_;
    Tensor cache_; // input for ReLU/Softsign, output for Tanh
};

class LinearLayer : public Layer {
public:
    LinearLayer(std::size_t in, std::size_t out, bool bias = true);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const override;
    std::string kind() const override { return "linear"; }
    std::string manifest_line() const override;
    void init_params(Rng& rng) override;
    void zero_grad() override;
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
    std::vector<std::pair<std::string, Tensor>> state() const override;
    void load_state(const std::string& key, const Tensor& t) override;

    Tensor& weights() { return weights_; }
    Tensor& bias() { return bias_; }

private:
    std::size_t in_, out_;
    bool has_bias_;
    Tensor weights_; // [in, out]
    Tensor bias_;    // [out]
    Tensor grad_weights_, grad_bias_;
    Tensor cached_input_;
    std::vector<double> wt_, xt_;
};

class MaxPoolLayer : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const override;
    std::string kind() const override { return "maxpool"; }

private:
    std::vector<std::vector<std::size_t>> argmax_;
    std::vector<std::size_t> in_item_shape_;
};

class FlattenLayer : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& item_shape) const override;
    std::string kind() const override { return "flatten"; }

private:
    std::vector<std::size_t> in_item_shape_;
};

/// Standalone element-wise psi with one shared (alpha, beta) pair; the
/// trainable input non-linearity of the divergence experiment.
class PsiLayer : public Layer {
public:
    explicit PsiLayer(bool split_sign = false);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& s) const override { return s; }
    std::string kind() const override { return "psi"; }
    std::string manifest_line() const override;
    void zero_grad() override;
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
    std::vector<std::pair<std::string, Tensor>> state() const override;
    void load_state(const std::string& key, const Tensor& t) override;

    double alpha(bool negative_branch = false) const { return alpha_[negative_branch && split_sign_ ? 1 : 0]; }
    double beta(bool negative_branch = false) const { return beta_[negative_branch && split_sign_ ? 1 : 0]; }
    std::vector<double>& alpha_values() { return alpha_; }
    std::vector<double>& beta_values() { return beta_; }

private:
    bool split_sign_;
    std::vector<double> alpha_, beta_; // one pair, two when split_sign
    std::vector<double> grad_alpha_, grad_beta_;
    Tensor cached_input_, cached_output_;
};

// ---- loss heads ----

struct LossOut {
    double value = 0.0;
    Tensor grad; // w.r.t. predictions
};

/// Mean over the batch of -log softmax(logits)[label].
LossOut softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Mean over all elements of the squared difference.
LossOut mean_squared_error(const Tensor& pred, const Tensor& target);

} // namespace pcnn
