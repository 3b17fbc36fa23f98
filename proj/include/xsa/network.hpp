// Minimal feedforward network: dense / conv2d / relu / maxpool / flatten
// layers, forward pass with full activation trace, and the input-gradient
// backward pass. Logits only; there is no softmax layer anywhere.
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

enum class LayerKind { Dense, Conv2D, ReLU, MaxPool2D, Flatten };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2D: return "conv2d";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool2D: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "dense") return LayerKind::Dense;
    if (s == "conv2d") return LayerKind::Conv2D;
    if (s == "relu") return LayerKind::ReLU;
    if (s == "maxpool2d") return LayerKind::MaxPool2D;
    if (s == "flatten") return LayerKind::Flatten;
    throw InvalidInput("unknown layer kind: " + s);
}

struct Layer {
    LayerKind kind = LayerKind::ReLU;
    Tensor weights;  // Dense: {out, in}; Conv2D: {filters, in_ch, kh, kw}
    Tensor bias;     // {out} / {filters}; empty when the layer has no bias
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t pool = 2;  // MaxPool2D window edge; stride equals the window

    static Layer dense(Tensor w, Tensor b = {}) {
        Layer l;
        l.kind = LayerKind::Dense;
        if (w.rank() != 2) throw ShapeError("dense weights must be rank-2 {out,in}");
        if (!b.empty() && (b.rank() != 1 || b.extent(0) != w.extent(0)))
            throw ShapeError("dense bias must be {out}");
        l.weights = std::move(w);
        l.bias = std::move(b);
        return l;
    }

    static Layer conv2d(Tensor w, Tensor b = {}, std::size_t stride = 1, std::size_t padding = 0) {
        Layer l;
        l.kind = LayerKind::Conv2D;
        if (w.rank() != 4) throw ShapeError("conv2d weights must be rank-4 {filters,in_ch,kh,kw}");
        if (!b.empty() && (b.rank() != 1 || b.extent(0) != w.extent(0)))
            throw ShapeError("conv2d bias must be {filters}");
        l.weights = std::move(w);
        l.bias = std::move(b);
        l.stride = stride;
        l.padding = padding;
        return l;
    }

    static Layer relu() {
        Layer l;
        l.kind = LayerKind::ReLU;
        return l;
    }

    static Layer maxpool(std::size_t size = 2) {
        Layer l;
        l.kind = LayerKind::MaxPool2D;
        l.pool = size;
        return l;
    }

    static Layer flatten() {
        Layer l;
        l.kind = LayerKind::Flatten;
        return l;
    }

    bool has_weights() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2D; }
};

// Output shape of one layer given its input shape; throws on mismatch.
inline std::vector<std::size_t> layer_output_shape(const Layer& layer,
                                                   const std::vector<std::size_t>& in) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            std::size_t flat = 1;
            for (std::size_t e : in) flat *= e;
            if (in.size() != 1 || flat != layer.weights.extent(1))
                throw ShapeError("dense layer expects flat input of size " +
                                 std::to_string(layer.weights.extent(1)));
            return {layer.weights.extent(0)};
        }
        case LayerKind::Conv2D: {
            if (in.size() != 3) throw ShapeError("conv2d expects {channels,height,width} input");
            const std::size_t c = in[0], h = in[1], w = in[2];
            if (c != layer.weights.extent(1))
                throw ShapeError("conv2d input channels mismatch");
            const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
            if (h + 2 * layer.padding < kh || w + 2 * layer.padding < kw)
                throw ShapeError("conv2d kernel larger than padded input");
            const std::size_t oh = (h + 2 * layer.padding - kh) / layer.stride + 1;
            const std::size_t ow = (w + 2 * layer.padding - kw) / layer.stride + 1;
            return {layer.weights.extent(0), oh, ow};
        }
        case LayerKind::ReLU:
            return in;
        case LayerKind::MaxPool2D: {
            if (in.size() != 3) throw ShapeError("maxpool2d expects {channels,height,width} input");
            if (in[1] < layer.pool || in[2] < layer.pool)
                throw ShapeError("maxpool2d window larger than input");
            return {in[0], (in[1] - layer.pool) / layer.pool + 1,
                    (in[2] - layer.pool) / layer.pool + 1};
        }
        case LayerKind::Flatten: {
            std::size_t flat = 1;
            for (std::size_t e : in) flat *= e;
            return {flat};
        }
    }
    throw Error("unreachable layer kind");
}

struct Network {
    std::vector<Layer> layers;
    std::vector<std::size_t> input_shape;
    std::size_t output_dim = 0;
    // Optional per-feature input bounds (z^B rule); same shape as the input.
    Tensor input_low, input_high;

    // Verifies consecutive layer shapes compose and the output is flat.
    void validate() const {
        std::vector<std::size_t> shape = input_shape;
        for (const Layer& l : layers) shape = layer_output_shape(l, shape);
        if (shape.size() != 1 || shape[0] != output_dim)
            throw ShapeError("network does not compose to a flat logit vector of the declared size");
        if (!input_low.empty() || !input_high.empty()) {
            std::size_t flat = 1;
            for (std::size_t e : input_shape) flat *= e;
            if (input_low.size() != flat || input_high.size() != flat)
                throw ShapeError("input bounds must match the input shape");
        }
    }

    std::size_t input_size() const {
        std::size_t flat = 1;
        for (std::size_t e : input_shape) flat *= e;
        return flat;
    }
};

struct ForwardTrace {
    // activations[0] is the input; activations[i+1] the output of layer i.
    std::vector<Tensor> activations;

    const Tensor& input() const { return activations.front(); }
    const Tensor& output() const { return activations.back(); }
    const Tensor& layer_input(std::size_t i) const { return activations[i]; }
    const Tensor& layer_output(std::size_t i) const { return activations[i + 1]; }
};

namespace detail {

inline Tensor dense_forward(const Layer& layer, const Tensor& in) {
    const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
    Tensor out({out_n});
    const double* w = layer.weights.data();
    for (std::size_t o = 0; o < out_n; ++o) {
        double s = layer.bias.empty() ? 0.0 : layer.bias[o];
        const double* wrow = w + o * in_n;
        for (std::size_t i = 0; i < in_n; ++i) s += wrow[i] * in[i];
        out[o] = s;
    }
    return out;
}

inline Tensor conv2d_forward(const Layer& layer, const Tensor& in) {
    const auto out_shape = layer_output_shape(layer, in.shape());
    const std::size_t ic_n = in.extent(0), ih = in.extent(1), iw = in.extent(2);
    const std::size_t f_n = out_shape[0], oh = out_shape[1], ow = out_shape[2];
    const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
    const std::size_t stride = layer.stride;
    const long pad = static_cast<long>(layer.padding);
    Tensor out(out_shape);
    for (std::size_t f = 0; f < f_n; ++f) {
        const double bias = layer.bias.empty() ? 0.0 : layer.bias[f];
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double s = bias;
                for (std::size_t ic = 0; ic < ic_n; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                        const double* in_row = in.data() + (ic * ih + iy) * iw;
                        const double* w_row =
                            layer.weights.data() + ((f * ic_n + ic) * kh + ky) * kw;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                            s += in_row[ix] * w_row[kx];
                        }
                    }
                }
                out.at3(f, oy, ox) = s;
            }
        }
    }
    return out;
}

inline Tensor relu_forward(const Tensor& in) {
    Tensor out = in;
    for (double& v : out.values())
        if (v < 0.0) v = 0.0;
    return out;
}

// Argmax index (flat, within the input tensor) per pool window; ties resolve
// to the first element in row-major window scan order. Forward, gradient and
// relevance routing all share this.
inline std::size_t pool_argmax(const Tensor& in, std::size_t c, std::size_t oy, std::size_t ox,
                               std::size_t pool) {
    const std::size_t ih = in.extent(1), iw = in.extent(2);
    std::size_t best_index = 0;
    double best = 0.0;
    bool first = true;
    for (std::size_t ky = 0; ky < pool; ++ky) {
        for (std::size_t kx = 0; kx < pool; ++kx) {
            const std::size_t iy = oy * pool + ky, ix = ox * pool + kx;
            const std::size_t idx = (c * ih + iy) * iw + ix;
            const double v = in[idx];
            if (first || v > best) {
                best = v;
                best_index = idx;
                first = false;
            }
        }
    }
    return best_index;
}

inline Tensor maxpool_forward(const Layer& layer, const Tensor& in) {
    const auto out_shape = layer_output_shape(layer, in.shape());
    Tensor out(out_shape);
    for (std::size_t c = 0; c < out_shape[0]; ++c)
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox)
                out.at3(c, oy, ox) = in[pool_argmax(in, c, oy, ox, layer.pool)];
    return out;
}

}  // namespace detail

inline Tensor layer_forward(const Layer& layer, const Tensor& in) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            // accept rank-1 only; flatten layers handle reshaping
            if (in.rank() != 1) throw ShapeError("dense input must be flat");
            return detail::dense_forward(layer, in);
        }
        case LayerKind::Conv2D: return detail::conv2d_forward(layer, in);
        case LayerKind::ReLU: return detail::relu_forward(in);
        case LayerKind::MaxPool2D: return detail::maxpool_forward(layer, in);
        case LayerKind::Flatten: return in.reshaped({in.size()});
    }
    throw Error("unreachable layer kind");
}

inline ForwardTrace forward(const Network& net, const Tensor& x) {
    if (x.shape() != net.input_shape)
        throw ShapeError("forward: input shape " + x.shape_string() + " does not match network");
    ForwardTrace trace;
    trace.activations.reserve(net.layers.size() + 1);
    trace.activations.push_back(x);
    for (const Layer& layer : net.layers)
        trace.activations.push_back(layer_forward(layer, trace.activations.back()));
    trace.output().ensure_finite("forward output");
    return trace;
}

namespace detail {

// Backward step for d(z_target)/d(input of layer i), given the gradient w.r.t.
// the layer output.
inline Tensor layer_input_gradient(const Layer& layer, const Tensor& in, Tensor grad_out) {
    switch (layer.kind) {
        case LayerKind::Dense: {
            const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
            Tensor grad_in(in.shape());
            for (std::size_t o = 0; o < out_n; ++o) {
                const double g = grad_out[o];
                if (g == 0.0) continue;
                const double* wrow = layer.weights.data() + o * in_n;
                for (std::size_t i = 0; i < in_n; ++i) grad_in[i] += g * wrow[i];
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
                        if (g == 0.0) continue;
                        for (std::size_t ic = 0; ic < ic_n; ++ic) {
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                                if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                                double* gin_row = grad_in.data() + (ic * ih + iy) * iw;
                                const double* w_row =
                                    layer.weights.data() + ((f * ic_n + ic) * kh + ky) * kw;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const long ix =
                                        static_cast<long>(ox * layer.stride + kx) - pad;
                                    if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                                    gin_row[ix] += g * w_row[kx];
                                }
                            }
                        }
                    }
                }
            }
            return grad_in;
        }
        case LayerKind::ReLU: {
            Tensor grad_in = std::move(grad_out);
            for (std::size_t i = 0; i < in.size(); ++i)
                if (in[i] <= 0.0) grad_in[i] = 0.0;
            return grad_in;
        }
        case LayerKind::MaxPool2D: {
            Tensor grad_in(in.shape());
            for (std::size_t c = 0; c < grad_out.extent(0); ++c)
                for (std::size_t oy = 0; oy < grad_out.extent(1); ++oy)
                    for (std::size_t ox = 0; ox < grad_out.extent(2); ++ox)
                        grad_in[pool_argmax(in, c, oy, ox, layer.pool)] +=
                            grad_out.at3(c, oy, ox);
            return grad_in;
        }
        case LayerKind::Flatten:
            return grad_out.reshaped(in.shape());
    }
    throw Error("unreachable layer kind");
}

}  // namespace detail

// d(z_target)/dx from a cached trace. Max-pool routes to the window argmax
// (first in row-major order on ties); ReLU uses the subgradient 0 at 0.
inline Tensor input_gradient(const Network& net, const ForwardTrace& trace, std::size_t target) {
    if (target >= net.output_dim) throw InvalidInput("input_gradient: target index out of range");
    Tensor grad({net.output_dim});
    grad[target] = 1.0;
    for (std::size_t i = net.layers.size(); i-- > 0;)
        grad = detail::layer_input_gradient(net.layers[i], trace.layer_input(i), std::move(grad));
    return grad;
}

inline Tensor input_gradient(const Network& net, const Tensor& x, std::size_t target) {
    return input_gradient(net, forward(net, x), target);
}

}  // namespace xsa
