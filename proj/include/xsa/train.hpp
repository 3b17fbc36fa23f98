// Deterministic plain-SGD trainer on softmax cross-entropy. Exists only to
// produce explainable desk-scale models: no momentum, no augmentation, no
// schedule. Per-item gradients may run on the worker pool; they are reduced
// in batch order so weights are bit-identical for any thread count.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/idx.hpp"
#include "xsa/network.hpp"
#include "xsa/parallel.hpp"
#include "xsa/rng.hpp"

namespace xsa {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    double target_accuracy = 0.95;   // on the held-out split; reaching it stops training
    double holdout_fraction = 0.2;
    std::size_t workers = 0;         // 0 = XSA_WORKERS / hardware default
    bool verbose = false;
};

struct TrainResult {
    Network net;
    std::vector<double> loss_history;      // mean loss per epoch
    std::vector<double> holdout_accuracy;  // per epoch
};

namespace detail {

struct LayerGrads {
    Tensor weights;
    Tensor bias;
};

// Weight/bias gradients plus the input gradient for one layer.
inline Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                             LayerGrads& grads) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
            Tensor grad_in(in.shape());
            for (std::size_t o = 0; o < out_n; ++o) {
                const double g = grad_out[o];
                if (!layer.bias.empty()) grads.bias[o] += g;
                if (g == 0.0) continue;
                const double* wrow = layer.weights.data() + o * in_n;
                double* dwrow = grads.weights.data() + o * in_n;
                for (std::size_t i = 0; i < in_n; ++i) {
                    dwrow[i] += g * in[i];
                    grad_in[i] += g * wrow[i];
                }
            }
            return grad_in;
        }
        case LayerKind::Conv2D: {
            const std::size_t ic_n = in.extent(0), ih = in.extent(1), iw = in.extent(2);
            const std::size_t f_n = grad_out.extent(0), oh = grad_out.extent(1),
                              ow = grad_out.extent(2);
            const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
            const long pad = static_cast<long>(layer.padding);
            Tensor grad_in(in.shape());
            for (std::size_t f = 0; f < f_n; ++f) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const double g = grad_out.at3(f, oy, ox);
                        if (!layer.bias.empty()) grads.bias[f] += g;
                        if (g == 0.0) continue;
                        for (std::size_t ic = 0; ic < ic_n; ++ic) {
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                                if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                                const double* in_row = in.data() + (ic * ih + iy) * iw;
                                double* gin_row = grad_in.data() + (ic * ih + iy) * iw;
                                const std::size_t wbase = ((f * ic_n + ic) * kh + ky) * kw;
                                const double* w_row = layer.weights.data() + wbase;
                                double* dw_row = grads.weights.data() + wbase;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const long ix =
                                        static_cast<long>(ox * layer.stride + kx) - pad;
                                    if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                                    dw_row[kx] += g * in_row[ix];
                                    gin_row[ix] += g * w_row[kx];
                                }
                            }
                        }
                    }
                }
            }
            return grad_in;
        }
        default:
            // parameter-free layers reuse the inference backward step
            return layer_input_gradient(layer, in, grad_out);
    }
}

inline std::vector<LayerGrads> make_grad_buffers(const Network& net) {
    std::vector<LayerGrads> grads(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].has_weights()) {
            grads[i].weights = Tensor(net.layers[i].weights.shape());
            if (!net.layers[i].bias.empty()) grads[i].bias = Tensor(net.layers[i].bias.shape());
        }
    }
    return grads;
}

inline void zero_grads(std::vector<LayerGrads>& grads) {
    for (auto& g : grads) {
        g.weights.fill(0.0);
        g.bias.fill(0.0);
    }
}

// Softmax cross-entropy loss and its gradient at the logits.
inline double softmax_cross_entropy(const Tensor& logits, int label, Tensor& grad_logits) {
    const std::size_t n = logits.size();
    double zmax = logits[0];
    for (std::size_t i = 1; i < n; ++i) zmax = std::max(zmax, logits[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) denom += std::exp(logits[i] - zmax);
    const double log_denom = std::log(denom) + zmax;
    for (std::size_t i = 0; i < n; ++i)
        grad_logits[i] = std::exp(logits[i] - log_denom);
    grad_logits[static_cast<std::size_t>(label)] -= 1.0;
    return log_denom - logits[static_cast<std::size_t>(label)];
}

// Full backward pass for one example; accumulates into `grads`, returns loss.
inline double example_gradients(const Network& net, const Tensor& x, int label,
                                std::vector<LayerGrads>& grads) {
    const ForwardTrace trace = forward(net, x);
    Tensor grad({net.output_dim});
    const double loss = softmax_cross_entropy(trace.output(), label, grad);
    for (std::size_t i = net.layers.size(); i-- > 0;)
        grad = layer_backward(net.layers[i], trace.layer_input(i), grad, grads[i]);
    return loss;
}

}  // namespace detail

inline int predict(const Network& net, const Tensor& x) {
    const Tensor z = forward(net, x).output();
    std::size_t best = 0;
    for (std::size_t i = 1; i < z.size(); ++i)
        if (z[i] > z[best]) best = i;
    return static_cast<int>(best);
}

inline double accuracy(const Network& net, const Dataset& data,
                       const std::vector<std::size_t>& indices, std::size_t workers = 0) {
    if (indices.empty()) return 0.0;
    std::vector<char> hit(indices.size(), 0);
    parallel_for(indices.size(), [&](std::size_t i) {
        hit[i] = predict(net, data.images[indices[i]]) == data.labels[indices[i]];
    }, workers);
    std::size_t correct = 0;
    for (char h : hit) correct += h;
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

// Plain SGD. Deterministic for a fixed (net init, data, config.seed).
inline TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg) {
    if (data.images.empty() || data.labels.size() != data.images.size())
        throw InvalidInput("train: dataset must supply matching images and labels");
    net.validate();

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(sub_seed(cfg.seed, 0xDA7A5E7));
    split_rng.shuffle(order);
    const std::size_t holdout_n =
        std::min(data.size() - 1,
                 static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> holdout(order.begin(), order.begin() + holdout_n);
    std::vector<std::size_t> trainset(order.begin() + holdout_n, order.end());

    const std::size_t workers = cfg.workers ? cfg.workers : worker_count();
    std::vector<std::vector<detail::LayerGrads>> slot_grads(cfg.batch_size);
    for (auto& s : slot_grads) s = detail::make_grad_buffers(net);
    std::vector<double> slot_loss(cfg.batch_size, 0.0);

    TrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng(sub_seed(cfg.seed, 1 + epoch));
        epoch_rng.shuffle(trainset);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < trainset.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, trainset.size() - start);
            parallel_for(count, [&](std::size_t s) {
                detail::zero_grads(slot_grads[s]);
                slot_loss[s] = detail::example_gradients(
                    net, data.images[trainset[start + s]], data.labels[trainset[start + s]],
                    slot_grads[s]);
            }, workers);
            // reduce in batch order: bit-identical regardless of thread count
            const double scale = cfg.learning_rate / static_cast<double>(count);
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                if (!net.layers[li].has_weights()) continue;
                Layer& layer = net.layers[li];
                for (std::size_t s = 0; s < count; ++s) {
                    const auto& g = slot_grads[s][li];
                    for (std::size_t i = 0; i < layer.weights.size(); ++i)
                        layer.weights[i] -= scale * g.weights[i];
                    for (std::size_t i = 0; i < layer.bias.size(); ++i)
                        layer.bias[i] -= scale * g.bias[i];
                }
            }
            for (std::size_t s = 0; s < count; ++s) epoch_loss += slot_loss[s];
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(trainset.size()));
        const double acc = accuracy(net, data, holdout, workers);
        result.holdout_accuracy.push_back(acc);
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %zu loss %.6f holdout %.4f\n", epoch + 1,
                         result.loss_history.back(), acc);
        if (acc >= cfg.target_accuracy) {
            result.net = std::move(net);
            return result;
        }
    }
    throw TrainingFailure("training did not reach " + std::to_string(cfg.target_accuracy) +
                              " holdout accuracy in " + std::to_string(cfg.epochs) + " epochs",
                          result.loss_history);
}

// He-normal initialized digit CNN: 28x28x1 input, three 8-filter convs
// (3x3, 3x3, 5x5), pool 2, three 16-filter convs (5x5, 3x3, 3x3), pool 2,
// flatten, dense to 10 logits. Padding keeps spatial size through convs.
inline Network make_digit_cnn(std::uint64_t seed) {
    Rng rng(sub_seed(seed, 0x1417));
    // moderated He init: plain SGD at lr 0.1 needs a gentler start on this
    // depth than standard He scaling
    auto conv = [&](std::size_t filters, std::size_t in_ch, std::size_t k) {
        Tensor w({filters, in_ch, k, k});
        const double scale = 0.6 * std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
        for (double& v : w.values()) v = scale * rng.gaussian();
        Tensor b({filters});
        return Layer::conv2d(std::move(w), std::move(b), 1, k / 2);
    };

    Network net;
    net.input_shape = {1, 28, 28};
    net.output_dim = 10;
    net.layers.push_back(conv(8, 1, 3));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(conv(8, 8, 3));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(conv(8, 8, 5));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::maxpool(2));
    net.layers.push_back(conv(16, 8, 5));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(conv(16, 16, 3));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(conv(16, 16, 3));
    net.layers.push_back(Layer::relu());
    net.layers.push_back(Layer::maxpool(2));
    net.layers.push_back(Layer::flatten());
    {
        Tensor w({10, 7 * 7 * 16});
        const double scale = 0.6 * std::sqrt(2.0 / static_cast<double>(7 * 7 * 16));
        for (double& v : w.values()) v = scale * rng.gaussian();
        net.layers.push_back(Layer::dense(std::move(w), Tensor({10})));
    }
    // pixel-domain bounds for the z^B rule
    net.input_low = Tensor({784});
    net.input_high = Tensor({784});
    net.input_high.fill(1.0);
    net.validate();
    return net;
}

inline TrainResult train_small_cnn(const Dataset& data, const TrainConfig& cfg) {
    return train(make_digit_cnn(cfg.seed), data, cfg);
}

}  // namespace xsa
