// Analytical LRP-gamma results, each checked against explicitly constructed
// per-layer redistribution matrices: the closed-form L1 column/operator norm
// 1 + 2c/(1-c+gamma), entrywise monotonicity in gamma, the z+ limit, and the
// per-layer product bound on the whole explanation chain.
//
// p_k / n_k are the summed positive / negative inputs of output neuron k;
// the bias joins them as a neuron contribution, matching the propagation's
// denominator. "Admissible" columns have p_k > 0 and |n_k| < p_k (activated
// ReLU); saturated columns are reported but excluded from c.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/explainers.hpp"
#include "xsa/linalg.hpp"
#include "xsa/network.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

struct LayerColumnStats {
    std::vector<double> p, n;  // per output neuron; n <= 0
};

inline LayerColumnStats layer_column_stats(const Layer& layer, const Tensor& activations) {
    if (!layer.has_weights())
        throw InvalidInput("layer_column_stats: layer has no weights");
    LayerColumnStats stats;
    if (layer.kind == LayerKind::Dense) {
        const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
        stats.p.assign(out_n, 0.0);
        stats.n.assign(out_n, 0.0);
        for (std::size_t k = 0; k < out_n; ++k) {
            const double* wrow = layer.weights.data() + k * in_n;
            for (std::size_t j = 0; j < in_n; ++j) {
                const double contrib = activations[j] * wrow[j];
                (contrib > 0.0 ? stats.p[k] : stats.n[k]) += contrib;
            }
            if (!layer.bias.empty())
                (layer.bias[k] > 0.0 ? stats.p[k] : stats.n[k]) += layer.bias[k];
        }
        return stats;
    }
    // conv: one column per output position (f, oy, ox)
    const auto out_shape = layer_output_shape(layer, activations.shape());
    const std::size_t ic_n = activations.extent(0), ih = activations.extent(1),
                      iw = activations.extent(2);
    const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
    const long pad = static_cast<long>(layer.padding);
    const std::size_t out_total = out_shape[0] * out_shape[1] * out_shape[2];
    stats.p.assign(out_total, 0.0);
    stats.n.assign(out_total, 0.0);
    std::size_t k = 0;
    for (std::size_t f = 0; f < out_shape[0]; ++f)
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox, ++k) {
                for (std::size_t ic = 0; ic < ic_n; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * layer.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                            const double contrib =
                                activations[(ic * ih + iy) * iw + ix] *
                                layer.weights[((f * ic_n + ic) * kh + ky) * kw + kx];
                            (contrib > 0.0 ? stats.p[k] : stats.n[k]) += contrib;
                        }
                    }
                if (!layer.bias.empty())
                    (layer.bias[f] > 0.0 ? stats.p[k] : stats.n[k]) += layer.bias[f];
            }
    return stats;
}

// The full input x output redistribution matrix of one LRP-gamma step
// (conv layers are unrolled column by column). Columns with an exactly zero
// denominator are zeroed and reported in `flagged`.
inline Matrix explicit_layer_matrix(const Layer& layer, const Tensor& activations, double gamma,
                                    std::vector<std::size_t>* flagged = nullptr) {
    if (!layer.has_weights())
        throw InvalidInput("explicit_layer_matrix: layer has no weights");
    const auto rho = [gamma](double w) { return w + gamma * (w > 0.0 ? w : 0.0); };

    if (layer.kind == LayerKind::Dense) {
        const std::size_t out_n = layer.weights.extent(0), in_n = layer.weights.extent(1);
        Matrix m(in_n, out_n);
        for (std::size_t k = 0; k < out_n; ++k) {
            const double* wrow = layer.weights.data() + k * in_n;
            double denom = layer.bias.empty() ? 0.0 : rho(layer.bias[k]);
            for (std::size_t j = 0; j < in_n; ++j) denom += activations[j] * rho(wrow[j]);
            if (denom == 0.0) {
                if (flagged) flagged->push_back(k);
                continue;
            }
            for (std::size_t j = 0; j < in_n; ++j)
                m(j, k) = activations[j] * rho(wrow[j]) / denom;
        }
        return m;
    }

    const auto out_shape = layer_output_shape(layer, activations.shape());
    const std::size_t ic_n = activations.extent(0), ih = activations.extent(1),
                      iw = activations.extent(2);
    const std::size_t kh = layer.weights.extent(2), kw = layer.weights.extent(3);
    const long pad = static_cast<long>(layer.padding);
    const std::size_t out_total = out_shape[0] * out_shape[1] * out_shape[2];
    Matrix m(activations.size(), out_total);
    std::size_t k = 0;
    for (std::size_t f = 0; f < out_shape[0]; ++f)
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox, ++k) {
                double denom = layer.bias.empty() ? 0.0 : rho(layer.bias[f]);
                for (std::size_t ic = 0; ic < ic_n; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * layer.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                            denom += activations[(ic * ih + iy) * iw + ix] *
                                     rho(layer.weights[((f * ic_n + ic) * kh + ky) * kw + kx]);
                        }
                    }
                if (denom == 0.0) {
                    if (flagged) flagged->push_back(k);
                    continue;
                }
                for (std::size_t ic = 0; ic < ic_n; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * layer.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                            m((ic * ih + iy) * iw + ix, k) +=
                                activations[(ic * ih + iy) * iw + ix] *
                                rho(layer.weights[((f * ic_n + ic) * kh + ky) * kw + kx]) / denom;
                        }
                    }
            }
    return m;
}

inline double analytic_column_l1(double c, double gamma) {
    return 1.0 + 2.0 * c / (1.0 - c + gamma);
}

struct LayerNormReport {
    std::size_t layer_index = 0;
    double gamma = 0.0;
    std::vector<std::size_t> admissible;  // column ids with p > 0 and |n| < p
    std::vector<std::size_t> saturated;   // p > 0 but |n| >= p; excluded from c
    std::vector<std::size_t> inactive;    // p == 0
    std::vector<double> c_values;         // aligned with `admissible`
    double c = 0.0;
    double analytic_l1 = 1.0;
    double numeric_l1 = std::numeric_limits<double>::quiet_NaN();
    std::size_t argmax_column = 0;
};

inline LayerNormReport analytic_l1_norm(const Layer& layer, const Tensor& activations,
                                        double gamma, bool compute_numeric = true,
                                        std::size_t layer_index = 0) {
    const LayerColumnStats stats = layer_column_stats(layer, activations);
    LayerNormReport report;
    report.layer_index = layer_index;
    report.gamma = gamma;
    for (std::size_t k = 0; k < stats.p.size(); ++k) {
        if (stats.p[k] <= 0.0) {
            report.inactive.push_back(k);
        } else if (-stats.n[k] >= stats.p[k]) {
            report.saturated.push_back(k);
        } else {
            const double ck = -stats.n[k] / stats.p[k];
            report.admissible.push_back(k);
            report.c_values.push_back(ck);
            if (ck >= report.c) {
                // strict comparison keeps the first argmax on exact ties
                if (ck > report.c || report.c_values.size() == 1) report.argmax_column = k;
                report.c = std::max(report.c, ck);
            }
        }
    }
    if (report.admissible.empty())
        throw Error("analytic_l1_norm: no admissible column in layer " +
                    std::to_string(layer_index));
    report.analytic_l1 = analytic_column_l1(report.c, gamma);
    if (compute_numeric)
        report.numeric_l1 = l1_operator_norm(explicit_layer_matrix(layer, activations, gamma));
    return report;
}

struct MonotonicityViolation {
    std::size_t row = 0, column = 0;
    double gamma_low = 0.0, gamma_high = 0.0;
    std::string what;
};

struct MonotonicityReport {
    bool entrywise_ok = true;
    bool l1_nonincreasing = true;
    bool argmax_constant = true;
    std::vector<double> l1_norms;        // per gamma, over admissible columns
    std::vector<std::size_t> argmax;     // per gamma
    std::optional<MonotonicityViolation> counterexample;

    bool all_ok() const { return entrywise_ok && l1_nonincreasing && argmax_constant; }
};

// Checks, over an ascending gamma grid and the layer's admissible columns:
// entrywise |R(g2)| <= |R(g1)| + 1e-12, L1 norm non-increasing, and a
// constant argmax column.
inline MonotonicityReport gamma_monotonicity_check(const Layer& layer, const Tensor& activations,
                                                   const std::vector<double>& gammas) {
    if (gammas.size() < 2)
        throw InvalidInput("gamma_monotonicity_check: need at least two gamma values");
    for (std::size_t i = 0; i + 1 < gammas.size(); ++i)
        if (!(gammas[i] < gammas[i + 1]))
            throw InvalidInput("gamma_monotonicity_check: gammas must ascend");

    const LayerColumnStats stats = layer_column_stats(layer, activations);
    std::vector<std::size_t> admissible;
    for (std::size_t k = 0; k < stats.p.size(); ++k)
        if (stats.p[k] > 0.0 && -stats.n[k] < stats.p[k]) admissible.push_back(k);
    if (admissible.empty()) throw Error("gamma_monotonicity_check: no admissible column");

    MonotonicityReport report;
    std::vector<Matrix> mats;
    mats.reserve(gammas.size());
    for (double g : gammas) mats.push_back(explicit_layer_matrix(layer, activations, g));

    const std::size_t rows = mats[0].rows();
    std::vector<std::vector<double>> colnorms(gammas.size());
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        double best = -1.0;
        std::size_t best_k = admissible.front();
        colnorms[gi].reserve(admissible.size());
        for (std::size_t k : admissible) {
            double colsum = 0.0;
            for (std::size_t j = 0; j < rows; ++j) colsum += std::abs(mats[gi](j, k));
            colnorms[gi].push_back(colsum);
            if (colsum > best) {
                best = colsum;
                best_k = k;
            }
        }
        report.l1_norms.push_back(best);
        report.argmax.push_back(best_k);
    }

    for (std::size_t a = 0; a + 1 < gammas.size() && report.entrywise_ok; ++a) {
        for (std::size_t b = a + 1; b < gammas.size() && report.entrywise_ok; ++b) {
            for (std::size_t k : admissible) {
                for (std::size_t j = 0; j < rows; ++j) {
                    if (std::abs(mats[b](j, k)) > std::abs(mats[a](j, k)) + 1e-12) {
                        report.entrywise_ok = false;
                        report.counterexample = {j, k, gammas[a], gammas[b],
                                                 "entry magnitude increased"};
                        break;
                    }
                }
                if (!report.entrywise_ok) break;
            }
        }
    }
    for (std::size_t gi = 0; gi + 1 < gammas.size(); ++gi) {
        if (report.l1_norms[gi + 1] > report.l1_norms[gi] + 1e-12) {
            report.l1_nonincreasing = false;
            if (!report.counterexample)
                report.counterexample = {0, 0, gammas[gi], gammas[gi + 1], "L1 norm increased"};
        }
    }
    // the gamma-0 argmax column must stay (within tolerance) maximal at every
    // other gamma; exact ties between columns are not a violation
    std::size_t first_arg_pos = 0;
    for (std::size_t i = 0; i < admissible.size(); ++i)
        if (admissible[i] == report.argmax.front()) first_arg_pos = i;
    for (std::size_t gi = 1; gi < gammas.size(); ++gi) {
        if (colnorms[gi][first_arg_pos] <
            report.l1_norms[gi] - 1e-9 * std::max(1.0, report.l1_norms[gi])) {
            report.argmax_constant = false;
            if (!report.counterexample)
                report.counterexample = {0, report.argmax[gi], gammas.front(), gammas[gi],
                                         "argmax column moved"};
        }
    }
    return report;
}

struct NetworkBoundReport {
    struct LayerRow {
        std::size_t layer_index = 0;
        double c = 0.0;
        double analytic_l1 = 1.0;
    };
    double gamma = 0.0;
    std::vector<LayerRow> per_layer;       // weighted layers only
    double product_bound = 1.0;
    std::vector<double> realized_ratios;   // ||E(e_j)||_1 per basis readout
    double max_realized = 0.0;
    double median_realized = 0.0;
    bool bound_holds = false;
};

// Per-layer analytic bounds from live activations and realized L1 ratios for
// all basis readouts under the uniform-gamma plan (Eq.-8-style chain).
inline NetworkBoundReport network_bound_report(const Network& net, const Tensor& x, double gamma,
                                               double eps_stab = 1e-9) {
    const ForwardTrace trace = forward(net, x);
    NetworkBoundReport report;
    report.gamma = gamma;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (!net.layers[i].has_weights()) continue;
        const LayerColumnStats stats = layer_column_stats(net.layers[i], trace.layer_input(i));
        bool any_active = false;
        double c = 0.0;
        for (std::size_t k = 0; k < stats.p.size(); ++k) {
            if (stats.p[k] <= 0.0) continue;
            any_active = true;
            if (-stats.n[k] < stats.p[k]) c = std::max(c, -stats.n[k] / stats.p[k]);
        }
        if (!any_active)
            throw Error("network_bound_report: inactive layer " + std::to_string(i));
        report.per_layer.push_back({i, c, analytic_column_l1(c, gamma)});
        report.product_bound *= report.per_layer.back().analytic_l1;
    }

    const LrpRulePlan plan = LrpRulePlan::uniform_gamma(net, gamma, eps_stab);
    std::vector<double> y(net.output_dim, 0.0);
    for (std::size_t j = 0; j < net.output_dim; ++j) {
        y.assign(net.output_dim, 0.0);
        y[j] = 1.0;
        const Tensor e = lrp_propagate(net, trace, y, plan);
        report.realized_ratios.push_back(l1_norm(e.values()));
    }
    std::vector<double> sorted = report.realized_ratios;
    std::sort(sorted.begin(), sorted.end());
    report.max_realized = sorted.back();
    report.median_realized = sorted[sorted.size() / 2];
    report.bound_holds = report.max_realized <= report.product_bound * (1.0 + 1e-9);
    return report;
}

}  // namespace xsa
