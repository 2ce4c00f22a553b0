#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pcnn/layers.hpp"

namespace pcnn {

enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from(const std::string& name);

/// Ordered layer stack with exactly one loss head.
class Network {
public:
    Network() = default;
    explicit Network(LossKind loss) : loss_(loss) {}

    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    Network& add(std::unique_ptr<Layer> layer);
    template <typename L, typename... Args> Network& emplace(Args&&... args) {
        return add(std::make_unique<L>(std::forward<Args>(args)...));
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }
    std::string layer_name(std::size_t i) const;

    LossKind loss_kind() const { return loss_; }
    void set_loss(LossKind k) { loss_ = k; }

    /// Walks per-item shapes through all layers; throws on incompatibility.
    std::vector<std::size_t> validate(const std::vector<std::size_t>& input_item_shape) const;

    /// Seeded parameter init; layer i draws from its own named substream so
    /// architecture variants that share a prefix consume identical values.
    void init_params(std::uint64_t seed);

    Tensor forward(const Tensor& x, bool train);
    /// Eval-mode forward that appends (layer name, activations) after each layer.
    Tensor forward_record(const Tensor& x, std::vector<std::pair<std::string, Tensor>>& record);
    /// Chains layer adjoints; returns the gradient w.r.t. the network input.
    Tensor backward(const Tensor& grad_out);

    void zero_grad();
    std::vector<ParamRef> params();

    LossOut loss(const Tensor& pred, const std::vector<int>& labels) const;
    LossOut loss(const Tensor& pred, const Tensor& targets) const;

    /// Checkpoint: <dir>/manifest.txt plus one PCT1 file per named state tensor.
    void save(const std::string& dir) const;
    static Network load(const std::string& dir);

    std::string manifest() const;
    static Network from_manifest(const std::string& text);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    LossKind loss_ = LossKind::SoftmaxCrossEntropy;
};

std::unique_ptr<Layer> layer_from_manifest_line(const std::string& line);

} // namespace pcnn
