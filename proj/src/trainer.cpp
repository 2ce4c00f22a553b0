#include "pcnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcnn/rng.hpp"

namespace pcnn {

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    const std::size_t item = x.size() / x.dim(0);
    std::vector<std::size_t> shape = x.shape();
    shape[0] = end - begin;
    Tensor out(shape);
    for (std::size_t i = begin; i < end; ++i)
        std::copy(x.data() + idx[i] * item, x.data() + (idx[i] + 1) * item, out.data() + (i - begin) * item);
    return out;
}

namespace {

template <typename BatchStep>
TrainResult train_loop(const std::size_t n, const TrainOptions& opt, BatchStep step) {
    TrainResult res;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        Rng rng = Rng::stream(opt.seed, "epoch.shuffle", epoch);
        for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < n; b += opt.batch) {
            const std::size_t end = std::min(n, b + opt.batch);
            if (end - b < 2) break; // batch-norm needs >= 2 rows in train mode
            const double loss = step(idx, b, end);
            if (!std::isfinite(loss)) {
                res.diverged = true;
                res.epoch_loss.push_back(loss);
                return res;
            }
            loss_sum += loss;
            ++batches;
        }
        const double mean_loss = loss_sum / double(std::max<std::size_t>(1, batches));
        res.epoch_loss.push_back(mean_loss);
        if (opt.on_epoch && !opt.on_epoch(epoch, mean_loss)) break;
    }
    return res;
}

} // namespace

TrainResult train_classifier(Network& net, const Tensor& x, const std::vector<int>& labels,
                             const TrainOptions& opt) {
    if (x.dim(0) != labels.size()) throw DimError("sample/label count mismatch");
    SgdOptimizer optimizer(opt.optim);
    return train_loop(labels.size(), opt, [&](const std::vector<std::size_t>& idx, std::size_t b, std::size_t e) {
        Tensor bx = gather_rows(x, idx, b, e);
        std::vector<int> by(e - b);
        for (std::size_t i = b; i < e; ++i) by[i - b] = labels[idx[i]];
        net.zero_grad();
        Tensor out = net.forward(bx, true);
        LossOut l = net.loss(out, by);
        if (std::isfinite(l.value)) {
            net.backward(l.grad);
            auto params = net.params();
            optimizer.step(params);
        }
        return l.value;
    });
}

TrainResult train_regressor(Network& net, const Tensor& x, const Tensor& targets, const TrainOptions& opt) {
    if (x.dim(0) != targets.dim(0)) throw DimError("sample/target count mismatch");
    SgdOptimizer optimizer(opt.optim);
    return train_loop(x.dim(0), opt, [&](const std::vector<std::size_t>& idx, std::size_t b, std::size_t e) {
        Tensor bx = gather_rows(x, idx, b, e);
        Tensor bt = gather_rows(targets, idx, b, e);
        net.zero_grad();
        Tensor out = net.forward(bx, true);
        LossOut l = net.loss(out, bt);
        if (std::isfinite(l.value)) {
            net.backward(l.grad);
            auto params = net.params();
            optimizer.step(params);
        }
        return l.value;
    });
}

Tensor predict(Network& net, const Tensor& x, std::size_t batch) {
    const std::size_t n = x.dim(0);
    Tensor out;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t b = 0; b < n; b += batch) {
        const std::size_t end = std::min(n, b + batch);
        Tensor chunk = net.forward(gather_rows(x, idx, b, end), false);
        if (b == 0) {
            std::vector<std::size_t> shape = chunk.shape();
            shape[0] = n;
            out = Tensor(shape);
        }
        std::copy(chunk.data(), chunk.data() + chunk.size(), out.data() + b * (chunk.size() / (end - b)));
    }
    return out;
}

std::vector<int> predict_top1(Network& net, const Tensor& x, std::size_t batch) {
    Tensor logits = predict(net, x, batch);
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        out[i] = int(std::max_element(row, row + k) - row);
    }
    return out;
}

double accuracy(Network& net, const Tensor& x, const std::vector<int>& labels, std::size_t batch) {
    auto pred = predict_top1(net, x, batch);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++hit;
    return double(hit) / double(pred.size());
}

double topk_error(Network& net, const Tensor& x, const std::vector<int>& labels, std::size_t k,
                  std::size_t batch) {
    Tensor logits = predict(net, x, batch);
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::size_t miss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * c;
        const double lv = row[std::size_t(labels[i])];
        std::size_t better = 0;
        for (std::size_t j = 0; j < c; ++j)
            if (row[j] > lv) ++better;
        if (better >= k) ++miss;
    }
    return double(miss) / double(n);
}

} // namespace pcnn
