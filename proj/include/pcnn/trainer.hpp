#pragma once

#include <functional>
#include <vector>

#include "pcnn/network.hpp"
#include "pcnn/optim.hpp"

namespace pcnn {

struct TrainOptions {
    OptimConfig optim;
    std::size_t epochs = 100;
    std::size_t batch = 128;
    std::uint64_t seed = 0;
    /// called after each epoch with (epoch, mean batch loss); return false to stop
    std::function<bool(std::size_t, double)> on_epoch;
};

struct TrainResult {
    std::vector<double> epoch_loss;
    bool diverged = false; // NaN/Inf loss encountered; training stopped there
};

/// Mini-batch SGD over a labeled set. Shuffling, batching, and updates are
/// fully determined by (net state, options.seed).
TrainResult train_classifier(Network& net, const Tensor& x, const std::vector<int>& labels,
                             const TrainOptions& opt);

/// Same loop against tensor targets and the MSE head.
TrainResult train_regressor(Network& net, const Tensor& x, const Tensor& targets, const TrainOptions& opt);

/// Eval-mode predictions in batches.
Tensor predict(Network& net, const Tensor& x, std::size_t batch = 256);
std::vector<int> predict_top1(Network& net, const Tensor& x, std::size_t batch = 256);
double accuracy(Network& net, const Tensor& x, const std::vector<int>& labels, std::size_t batch = 256);
/// Fraction of rows whose label is NOT among the k largest logits.
double topk_error(Network& net, const Tensor& x, const std::vector<int>& labels, std::size_t k,
                  std::size_t batch = 256);

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end);

} // namespace pcnn
