// The five attribution methods: Gradient x Input, SmoothGrad, Integrated
// Gradients, LRP (gamma / epsilon / z^B rules) and Shapley value sampling.
// Each produces a flat d-vector of input relevances for one output logit.
//
// Stochastic methods take an explicit seed and draw sample i from
// sub_seed(seed, i); that schema is part of the contract so results are
// independent of evaluation order and reproducible from the seed alone.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/linalg.hpp"
#include "xsa/network.hpp"
#include "xsa/rng.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

enum class Method { GradientXInput, SmoothGrad, IntegratedGradients, Lrp, ShapleySampling };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::GradientXInput: return "gxi";
        case Method::SmoothGrad: return "smoothgrad";
        case Method::IntegratedGradients: return "ig";
        case Method::Lrp: return "lrp";
        case Method::ShapleySampling: return "shapley";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "gxi") return Method::GradientXInput;
    if (s == "smoothgrad") return Method::SmoothGrad;
    if (s == "ig") return Method::IntegratedGradients;
    if (s == "lrp") return Method::Lrp;
    if (s == "shapley") return Method::ShapleySampling;
    throw InvalidInput("unknown method: " + s);
}

struct MethodParams {
    double gamma = 0.1;          // LRP
    double noise_std = 0.1;      // SmoothGrad s
    int samples = 10;            // SmoothGrad n
    bool times_input = false;    // SmoothGrad x-input toggle (off by default)
    int steps = 10;              // IG
    double baseline_value = 0.0; // IG / Shapley removal value ("black")
    int cycles = 25;             // Shapley
    std::size_t patch_size = 1;  // Shapley removal unit edge
    std::uint64_t seed = 0;

    // the value the sweep varies for this method (gamma, s, ...)
    double swept_value(Method m) const {
        switch (m) {
            case Method::Lrp: return gamma;
            case Method::SmoothGrad: return noise_std;
            case Method::IntegratedGradients: return static_cast<double>(steps);
            case Method::ShapleySampling: return static_cast<double>(cycles);
            case Method::GradientXInput: return 0.0;
        }
        return 0.0;
    }
};

struct Attribution {
    Tensor values;  // flat {d}
    Method method = Method::GradientXInput;
    MethodParams params;
    std::size_t target = 0;
};

// ---------------------------------------------------------------------------
// LRP rules and plans

struct LrpRule {
    enum class Kind { Gamma, Epsilon, ZB } kind = Kind::Gamma;
    double gamma = 0.0;
    double epsilon = 1e-9;

    static LrpRule Gamma(double g) { return {Kind::Gamma, g, 0.0}; }
    static LrpRule Epsilon(double e) { return {Kind::Epsilon, 0.0, e}; }
    static LrpRule ZB() { return {Kind::ZB, 0.0, 0.0}; }
};

struct LrpRulePlan {
    std::vector<LrpRule> rules;  // one per layer; ignored on parameter-free layers
    double eps_stab = 1e-9;      // sign-matched denominator stabilizer

    // LRP-gamma on every weighted layer.
    static LrpRulePlan uniform_gamma(const Network& net, double gamma, double eps_stab = 1e-9) {
        LrpRulePlan plan;
        plan.rules.assign(net.layers.size(), LrpRule::Gamma(gamma));
        plan.eps_stab = eps_stab;
        return plan;
    }

    // Gamma everywhere except the final weighted layer, which gets the
    // near-zero epsilon rule; optionally z^B on the first weighted layer.
    static LrpRulePlan digit_default(const Network& net, double gamma, bool zb_first = false) {
        LrpRulePlan plan = uniform_gamma(net, gamma);
        for (std::size_t i = net.layers.size(); i-- > 0;) {
            if (net.layers[i].has_weights()) {
                plan.rules[i] = LrpRule::Epsilon(1e-9);
                break;
            }
        }
        if (zb_first) {
            for (std::size_t i = 0; i < net.layers.size(); ++i) {
                if (net.layers[i].has_weights()) {
                    plan.rules[i] = LrpRule::ZB();
                    break;
                }
            }
        }
        return plan;
    }

    void validate(const Network& net) const {
        if (rules.size() != net.layers.size())
            throw InvalidInput("LRP plan must assign exactly one rule per layer");
        bool before_first_weighted = true;
        for (std::size_t i = 0; i < rules.size(); ++i) {
            if (net.layers[i].has_weights()) {
                if (rules[i].kind == LrpRule::Kind::ZB && !before_first_weighted)
                    throw InvalidInput("z^B rule is only valid on the first weighted layer");
                before_first_weighted = false;
            }
        }
    }
};

// Relevance hit a neuron whose propagation denominator is exactly zero.
struct DegenerateNeuron : Error {
    std::size_t layer_index;
    std::size_t neuron;
    DegenerateNeuron(std::size_t layer, std::size_t k)
        : Error("degenerate LRP denominator at layer " + std::to_string(layer) + ", neuron " +
                std::to_string(k)),
          layer_index(layer), neuron(k) {}
};

namespace detail {

inline double stabilized(double z, double eps) {
    return z + (z >= 0.0 ? eps : -eps);
}

// r_k / z_k with the degenerate-denominator contract: zero relevance into a
// dead column contributes nothing; nonzero relevance is an error.
inline double safe_ratio(double r, double z, std::size_t layer, std::size_t k) {
    if (z == 0.0) {
        if (r == 0.0) return 0.0;
        throw DegenerateNeuron(layer, k);
    }
    return r / z;
}

// s-scores for one layer: stabilize denominators, divide relevance.
inline void relevance_scores(const Tensor& z, const Tensor& r, double eps, std::size_t layer,
                             Tensor& s) {
    for (std::size_t k = 0; k < z.size(); ++k)
        s[k] = safe_ratio(r[k], stabilized(z[k], eps), layer, k);
}

// Dense layer under a weight transform rho: z = rho(W) a + rho(b),
// then back-distribution c_j = sum_k rho(w_kj) s_k.
template <typename Rho>
Tensor dense_lrp(const Layer& layer, const Tensor& a, const Tensor& r, double eps,
                 std::size_t layer_index, Rho rho, bool use_bias) {
    const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
    Tensor z({out_n});
    for (std::size_t k = 0; k < out_n; ++k) {
        double sum = use_bias && !layer.bias.empty() ? rho(layer.bias[k]) : 0.0;
        const double* wrow = layer.weights.data() + k * in_n;
        for (std::size_t j = 0; j < in_n; ++j) sum += a[j] * rho(wrow[j]);
        z[k] = sum;
    }
    Tensor s({out_n});
    relevance_scores(z, r, eps, layer_index, s);
    Tensor out(a.shape());
    for (std::size_t k = 0; k < out_n; ++k) {
        if (s[k] == 0.0) continue;
        const double* wrow = layer.weights.data() + k * in_n;
        for (std::size_t j = 0; j < in_n; ++j) out[j] += a[j] * rho(wrow[j]) * s[k];
    }
    return out;
}

template <typename Rho>
Tensor conv_forward_rho(const Layer& layer, const Tensor& in, Rho rho, bool use_bias) {
    const auto out_shape = layer_output_shape(layer, in.shape());
    const std::size_t ic_n = in.extent(0), ih = in.extent(1), iw = in.extent(2);
    const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
    const long pad = static_cast<long>(layer.padding);
    Tensor out(out_shape);
    for (std::size_t f = 0; f < out_shape[0]; ++f) {
        const double bias = use_bias && !layer.bias.empty() ? rho(layer.bias[f]) : 0.0;
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox) {
                double sum = bias;
                for (std::size_t ic = 0; ic < ic_n; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                        const double* in_row = in.data() + (ic * ih + iy) * iw;
                        const double* w_row =
                            layer.weights.data() + ((f * ic_n + ic) * kh + ky) * kw;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * layer.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                            sum += in_row[ix] * rho(w_row[kx]);
                        }
                    }
                out.at3(f, oy, ox) = sum;
            }
    }
    return out;
}

// c_j = sum over connected outputs of rho(w_jk) s_k (transposed convolution).
template <typename Rho>
Tensor conv_transpose_rho(const Layer& layer, const std::vector<std::size_t>& in_shape,
                          const Tensor& s, Rho rho) {
    const std::size_t ic_n = in_shape[0], ih = in_shape[1], iw = in_shape[2];
    const std::size_t f_n = s.extent(0), oh = s.extent(1), ow = s.extent(2);
    const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
    const long pad = static_cast<long>(layer.padding);
    Tensor c{std::vector<std::size_t>(in_shape)};
    for (std::size_t f = 0; f < f_n; ++f)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double sv = s.at3(f, oy, ox);
                if (sv == 0.0) continue;
                for (std::size_t ic = 0; ic < ic_n; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                        double* c_row = c.data() + (ic * ih + iy) * iw;
                        const double* w_row =
                            layer.weights.data() + ((f * ic_n + ic) * kh + ky) * kw;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * layer.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                            c_row[ix] += sv * rho(w_row[kx]);
                        }
                    }
            }
    return c;
}

template <typename Rho>
Tensor conv_lrp(const Layer& layer, const Tensor& a, const Tensor& r, double eps,
                std::size_t layer_index, Rho rho, bool use_bias) {
    Tensor z = conv_forward_rho(layer, a, rho, use_bias);
    Tensor s(z.shape());
    relevance_scores(z, r, eps, layer_index, s);
    Tensor c = conv_transpose_rho(layer, a.shape(), s, rho);
    Tensor out(a.shape());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] * c[j];
    return out;
}

// z^B first-layer rule: relevance in terms of the input and its box bounds,
// z_k = sum_j (x_j w_jk - l_j w+_jk - h_j w-_jk); no bias term.
inline Tensor zb_lrp(const Layer& layer, const Tensor& x, const Tensor& r, double eps,
                     std::size_t layer_index, const Tensor& low_flat, const Tensor& high_flat) {
    if (low_flat.empty() || high_flat.empty())
        throw InvalidInput("z^B rule requires input bounds on the network");
    const Tensor low = low_flat.reshaped(std::vector<std::size_t>(x.shape()));
    const Tensor high = high_flat.reshaped(std::vector<std::size_t>(x.shape()));
    const auto id = [](double w) { return w; };
    const auto pos = [](double w) { return w > 0.0 ? w : 0.0; };
    const auto neg = [](double w) { return w < 0.0 ? w : 0.0; };

    Tensor z, cx, cl, ch;
    if (layer.kind == LayerKind::Dense) {
        const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
        z = Tensor({out_n});
        for (std::size_t k = 0; k < out_n; ++k) {
            const double* wrow = layer.weights.data() + k * in_n;
            double sum = 0.0;
            for (std::size_t j = 0; j < in_n; ++j)
                sum += x[j] * wrow[j] - low[j] * pos(wrow[j]) - high[j] * neg(wrow[j]);
            z[k] = sum;
        }
        Tensor s({out_n});
        relevance_scores(z, r, eps, layer_index, s);
        Tensor out(x.shape());
        for (std::size_t k = 0; k < out_n; ++k) {
            if (s[k] == 0.0) continue;
            const double* wrow = layer.weights.data() + k * in_n;
            for (std::size_t j = 0; j < in_n; ++j)
                out[j] += (x[j] * wrow[j] - low[j] * pos(wrow[j]) - high[j] * neg(wrow[j])) * s[k];
        }
        return out;
    }

    z = conv_forward_rho(layer, x, id, false);
    {
        Tensor zl = conv_forward_rho(layer, low, pos, false);
        Tensor zh = conv_forward_rho(layer, high, neg, false);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= zl[i] + zh[i];
    }
    Tensor s(z.shape());
    relevance_scores(z, r, eps, layer_index, s);
    cx = conv_transpose_rho(layer, x.shape(), s, id);
    cl = conv_transpose_rho(layer, x.shape(), s, pos);
    ch = conv_transpose_rho(layer, x.shape(), s, neg);
    Tensor out(x.shape());
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] = x[j] * cx[j] - low[j] * cl[j] - high[j] * ch[j];
    return out;
}

// One LRP step through layer i: relevance over the layer output -> relevance
// over the layer input.
inline Tensor lrp_layer_backward(const Network& net, std::size_t i, const Tensor& a,
                                 const Tensor& r, const LrpRulePlan& plan) {
    const Layer& layer = net.layers[i];
    switch (layer.kind) {
        case LayerKind::ReLU:
            return r;  // relevance passes through unchanged
        case LayerKind::Flatten:
            return r.reshaped(std::vector<std::size_t>(a.shape()));
        case LayerKind::MaxPool2D: {
            Tensor out(a.shape());
            for (std::size_t c = 0; c < r.extent(0); ++c)
                for (std::size_t oy = 0; oy < r.extent(1); ++oy)
                    for (std::size_t ox = 0; ox < r.extent(2); ++ox)
                        out[pool_argmax(a, c, oy, ox, layer.pool)] += r.at3(c, oy, ox);
            return out;
        }
        case LayerKind::Dense:
        case LayerKind::Conv2D: {
            const LrpRule& rule = plan.rules[i];
            switch (rule.kind) {
                case LrpRule::Kind::Gamma: {
                    const double g = rule.gamma;
                    const auto rho = [g](double w) { return w + g * (w > 0.0 ? w : 0.0); };
                    return layer.kind == LayerKind::Dense
                               ? dense_lrp(layer, a, r, plan.eps_stab, i, rho, true)
                               : conv_lrp(layer, a, r, plan.eps_stab, i, rho, true);
                }
                case LrpRule::Kind::Epsilon: {
                    const auto id = [](double w) { return w; };
                    return layer.kind == LayerKind::Dense
                               ? dense_lrp(layer, a, r, rule.epsilon, i, id, true)
                               : conv_lrp(layer, a, r, rule.epsilon, i, id, true);
                }
                case LrpRule::Kind::ZB:
                    return zb_lrp(layer, a, r, plan.eps_stab, i, net.input_low, net.input_high);
            }
        }
    }
    throw Error("unreachable layer kind");
}

}  // namespace detail

// Propagates an arbitrary output-space quantity y back to the input through
// the per-layer redistribution chain. Linear in y for a fixed trace.
inline Tensor lrp_propagate(const Network& net, const ForwardTrace& trace,
                            const std::vector<double>& y, const LrpRulePlan& plan) {
    if (y.size() != net.output_dim) throw ShapeError("lrp_propagate: readout dimension mismatch");
    plan.validate(net);
    Tensor r({net.output_dim});
    for (std::size_t j = 0; j < y.size(); ++j) r[j] = y[j];
    for (std::size_t i = net.layers.size(); i-- > 0;)
        r = detail::lrp_layer_backward(net, i, trace.layer_input(i), r, plan);
    return r.reshaped({r.size()});
}

// LRP attribution of logit z_target: relevance starts as the one-hot logit.
inline Attribution lrp(const Network& net, const ForwardTrace& trace, std::size_t target,
                       const LrpRulePlan& plan) {
    if (target >= net.output_dim) throw InvalidInput("lrp: target index out of range");
    std::vector<double> y(net.output_dim, 0.0);
    y[target] = trace.output()[target];
    Attribution attr;
    attr.values = lrp_propagate(net, trace, y, plan);
    attr.method = Method::Lrp;
    attr.target = target;
    return attr;
}

// ---------------------------------------------------------------------------
// Gradient-based methods

inline Attribution gradient_x_input(const Network& net, const Tensor& x, std::size_t target) {
    Tensor g = input_gradient(net, x, target);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= x[i];
    Attribution attr;
    attr.values = g.reshaped({g.size()});
    attr.method = Method::GradientXInput;
    attr.target = target;
    return attr;
}

inline Attribution smoothgrad(const Network& net, const Tensor& x, std::size_t target,
                              double noise_std, int samples, std::uint64_t seed,
                              bool times_input = false) {
    if (samples < 1) throw InvalidInput("smoothgrad: samples must be >= 1");
    if (noise_std < 0.0) throw InvalidInput("smoothgrad: noise std must be >= 0");
    Tensor acc({x.size()});
    if (noise_std == 0.0) {
        acc = input_gradient(net, x, target).reshaped({x.size()});
    } else {
        for (int i = 0; i < samples; ++i) {
            Rng rng(sub_seed(seed, static_cast<std::uint64_t>(i)));
            Tensor noisy = x;
            for (double& v : noisy.values()) v += noise_std * rng.gaussian();
            Tensor g = input_gradient(net, noisy, target);
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
        for (double& v : acc.values()) v /= samples;
    }
    if (times_input)
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] *= x[k];
    Attribution attr;
    attr.values = std::move(acc);
    attr.method = Method::SmoothGrad;
    attr.params.noise_std = noise_std;
    attr.params.samples = samples;
    attr.params.seed = seed;
    attr.params.times_input = times_input;
    attr.target = target;
    return attr;
}

// Right-endpoint Riemann approximation of the path integral from `baseline`
// to x, multiplied elementwise by (x - baseline).
inline Attribution integrated_gradients(const Network& net, const Tensor& x, std::size_t target,
                                        int steps, const Tensor& baseline) {
    if (steps < 1) throw InvalidInput("integrated_gradients: steps must be >= 1");
    if (!baseline.same_shape(x)) throw ShapeError("integrated_gradients: baseline shape mismatch");
    Tensor acc({x.size()});
    Tensor point(x.shape());
    for (int k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        for (std::size_t i = 0; i < x.size(); ++i)
            point[i] = baseline[i] + t * (x[i] - baseline[i]);
        Tensor g = input_gradient(net, point, target);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = (x[i] - baseline[i]) * acc[i] / steps;
    Attribution attr;
    attr.values = std::move(acc);
    attr.method = Method::IntegratedGradients;
    attr.params.steps = steps;
    attr.target = target;
    return attr;
}

// ---------------------------------------------------------------------------
// Shapley value sampling

namespace detail {

// Removal units: square patches of the spatial grid (all channels), or single
// elements for non-image inputs.
inline std::vector<std::vector<std::size_t>> removal_units(const std::vector<std::size_t>& shape,
                                                           std::size_t patch) {
    std::vector<std::vector<std::size_t>> units;
    if (shape.size() == 3 && patch > 1) {
        const std::size_t c_n = shape[0], h = shape[1], w = shape[2];
        for (std::size_t py = 0; py < h; py += patch)
            for (std::size_t px = 0; px < w; px += patch) {
                std::vector<std::size_t> unit;
                for (std::size_t c = 0; c < c_n; ++c)
                    for (std::size_t y = py; y < std::min(py + patch, h); ++y)
                        for (std::size_t x = px; x < std::min(px + patch, w); ++x)
                            unit.push_back((c * h + y) * w + x);
                units.push_back(std::move(unit));
            }
    } else {
        std::size_t total = 1;
        for (std::size_t e : shape) total *= e;
        units.reserve(total);
        for (std::size_t i = 0; i < total; ++i) units.push_back({i});
    }
    return units;
}

}  // namespace detail

// Permutation-sampling Shapley values: per cycle, insert units one at a time
// from an all-baseline input and attribute each its marginal change of the
// target logit. A patch's marginal is spread uniformly over its pixels so the
// telescoping efficiency identity holds per permutation.
inline Attribution shapley_sampling(const Network& net, const Tensor& x, std::size_t target,
                                    int cycles, double baseline_value, std::uint64_t seed,
                                    std::size_t patch_size = 1) {
    if (cycles < 1) throw InvalidInput("shapley_sampling: cycles must be >= 1");
    const auto units = detail::removal_units(x.shape(), patch_size);
    Tensor acc({x.size()});
    Tensor cur(x.shape());
    for (int c = 0; c < cycles; ++c) {
        Rng rng(sub_seed(seed, static_cast<std::uint64_t>(c)));
        const auto perm = rng.permutation(units.size());
        cur.fill(baseline_value);
        double prev = forward(net, cur).output()[target];
        for (const std::size_t u : perm) {
            for (const std::size_t idx : units[u]) cur[idx] = x[idx];
            const double val = forward(net, cur).output()[target];
            const double share = (val - prev) / static_cast<double>(units[u].size());
            for (const std::size_t idx : units[u]) acc[idx] += share;
            prev = val;
        }
    }
    for (double& v : acc.values()) v /= cycles;
    Attribution attr;
    attr.values = std::move(acc);
    attr.method = Method::ShapleySampling;
    attr.params.cycles = cycles;
    attr.params.baseline_value = baseline_value;
    attr.params.seed = seed;
    attr.params.patch_size = patch_size;
    attr.target = target;
    return attr;
}

// ---------------------------------------------------------------------------
// Whole-matrix construction (raw, unnormalized columns E(z_j) for all j).
// Forward work is shared across the h targets: one trace per LRP input, one
// trace per SmoothGrad/IG evaluation point, one model call per Shapley
// insertion (all logits are read at once).

inline Matrix attribution_matrix(const Network& net, const Tensor& x, Method method,
                                 const MethodParams& params,
                                 const LrpRulePlan* plan = nullptr) {
    const std::size_t d = x.size(), h = net.output_dim;
    Matrix m(d, h);
    const auto set_column = [&](std::size_t j, const Tensor& v) {
        for (std::size_t i = 0; i < d; ++i) m(i, j) = v[i];
    };

    switch (method) {
        case Method::GradientXInput: {
            const ForwardTrace trace = forward(net, x);
            for (std::size_t j = 0; j < h; ++j) {
                Tensor g = input_gradient(net, trace, j);
                for (std::size_t i = 0; i < d; ++i) m(i, j) = g[i] * x[i];
            }
            break;
        }
        case Method::Lrp: {
            LrpRulePlan default_plan;
            if (!plan) {
                default_plan = LrpRulePlan::digit_default(net, params.gamma);
                plan = &default_plan;
            }
            const ForwardTrace trace = forward(net, x);
            for (std::size_t j = 0; j < h; ++j) set_column(j, lrp(net, trace, j, *plan).values);
            break;
        }
        case Method::SmoothGrad: {
            if (params.noise_std == 0.0) {
                const ForwardTrace trace = forward(net, x);
                for (std::size_t j = 0; j < h; ++j) set_column(j, input_gradient(net, trace, j));
            } else {
                for (int i = 0; i < params.samples; ++i) {
                    Rng rng(sub_seed(params.seed, static_cast<std::uint64_t>(i)));
                    Tensor noisy = x;
                    for (double& v : noisy.values()) v += params.noise_std * rng.gaussian();
                    const ForwardTrace trace = forward(net, noisy);
                    for (std::size_t j = 0; j < h; ++j) {
                        Tensor g = input_gradient(net, trace, j);
                        for (std::size_t i2 = 0; i2 < d; ++i2) m(i2, j) += g[i2];
                    }
                }
                for (double& v : m.values()) v /= params.samples;
            }
            if (params.times_input)
                for (std::size_t j = 0; j < h; ++j)
                    for (std::size_t i = 0; i < d; ++i) m(i, j) *= x[i];
            break;
        }
        case Method::IntegratedGradients: {
            Tensor point(x.shape());
            for (int k = 1; k <= params.steps; ++k) {
                const double t = static_cast<double>(k) / params.steps;
                for (std::size_t i = 0; i < d; ++i)
                    point[i] = params.baseline_value + t * (x[i] - params.baseline_value);
                const ForwardTrace trace = forward(net, point);
                for (std::size_t j = 0; j < h; ++j) {
                    Tensor g = input_gradient(net, trace, j);
                    for (std::size_t i2 = 0; i2 < d; ++i2) m(i2, j) += g[i2];
                }
            }
            for (std::size_t j = 0; j < h; ++j)
                for (std::size_t i = 0; i < d; ++i)
                    m(i, j) *= (x[i] - params.baseline_value) / params.steps;
            break;
        }
        case Method::ShapleySampling: {
            const auto units = detail::removal_units(x.shape(), params.patch_size);
            Tensor cur(x.shape());
            for (int c = 0; c < params.cycles; ++c) {
                Rng rng(sub_seed(params.seed, static_cast<std::uint64_t>(c)));
                const auto perm = rng.permutation(units.size());
                cur.fill(params.baseline_value);
                Tensor prev = forward(net, cur).output();
                for (const std::size_t u : perm) {
                    for (const std::size_t idx : units[u]) cur[idx] = x[idx];
                    const Tensor val = forward(net, cur).output();
                    for (std::size_t j = 0; j < h; ++j) {
                        const double share =
                            (val[j] - prev[j]) / static_cast<double>(units[u].size());
                        for (const std::size_t idx : units[u]) m(idx, j) += share;
                    }
                    prev = val;
                }
            }
            for (double& v : m.values()) v /= params.cycles;
            break;
        }
    }
    if (!m.all_finite()) throw InvalidInput("attribution matrix contains non-finite values");
    return m;
}

// Single-target front door used by the sweep; dispatches on `method`.
inline Attribution explain(const Network& net, const Tensor& x, std::size_t target, Method method,
                           const MethodParams& params, const LrpRulePlan* plan = nullptr) {
    switch (method) {
        case Method::GradientXInput:
            return gradient_x_input(net, x, target);
        case Method::SmoothGrad:
            return smoothgrad(net, x, target, params.noise_std, params.samples, params.seed,
                              params.times_input);
        case Method::IntegratedGradients: {
            Tensor baseline(x.shape());
            baseline.fill(params.baseline_value);
            return integrated_gradients(net, x, target, params.steps, baseline);
        }
        case Method::Lrp: {
            LrpRulePlan default_plan;
            if (!plan) {
                default_plan = LrpRulePlan::digit_default(net, params.gamma);
                plan = &default_plan;
            }
            Attribution attr = lrp(net, forward(net, x), target, *plan);
            attr.params.gamma = params.gamma;
            return attr;
        }
        case Method::ShapleySampling:
            return shapley_sampling(net, x, target, params.cycles, params.baseline_value,
                                    params.seed, params.patch_size);
    }
    throw Error("unreachable method");
}

}  // namespace xsa
