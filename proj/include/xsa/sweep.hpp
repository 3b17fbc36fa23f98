// The experiment sweep: for every (image, method, parameter) cell build the
// redistribution matrix and record spectral metrics, entropy and the
// pixel-flipping curve. Cells run on the worker pool into preassigned slots
// with per-cell sub-seeds, so output is independent of scheduling and fully
// reproducible from config + seed.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "xsa/config.hpp"
#include "xsa/csv.hpp"
#include "xsa/evaluation.hpp"
#include "xsa/explainers.hpp"
#include "xsa/network.hpp"
#include "xsa/parallel.hpp"
#include "xsa/redistribution.hpp"
#include "xsa/spectral.hpp"
#include "xsa/train.hpp"

namespace xsa {

struct SweepCell {
    std::size_t image_id = 0;
    Method method = Method::Lrp;
    double param = 0.0;
    std::size_t target = 0;
    bool ok = false;
    std::string error;

    SpectralSummary spectral;
    double entropy = std::numeric_limits<double>::quiet_NaN();
    FlipCurve flip;
    bool has_flip = false;
    std::vector<std::size_t> degenerate_columns;

    // optional per-matrix stability-bound sampling
    double bound_sigma1 = 0.0, bound_max_ratio = 0.0;
    bool bound_checked = false, bound_holds = false;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::size_t output_dim = 0;
};

inline std::size_t resolve_target(const std::string& rule, const Network& net, const Tensor& x,
                                  int label) {
    if (rule == "predicted") return static_cast<std::size_t>(predict(net, x));
    if (rule == "label") {
        if (label < 0) throw ConfigError("target = label requires labels");
        return static_cast<std::size_t>(label);
    }
    const std::size_t j = std::stoul(rule);
    if (j >= net.output_dim) throw ConfigError("target index out of range: " + rule);
    return j;
}

inline MethodParams cell_params(const ExperimentConfig& cfg, Method method, double param,
                                std::uint64_t cell_seed) {
    MethodParams p;
    p.seed = cell_seed;
    p.samples = cfg.sg_samples;
    p.patch_size = cfg.shapley_patch;
    p.baseline_value = cfg.baseline_value;
    switch (method) {
        case Method::Lrp: p.gamma = param; break;
        case Method::SmoothGrad: p.noise_std = param; break;
        case Method::IntegratedGradients: p.steps = static_cast<int>(param); break;
        case Method::ShapleySampling: p.cycles = static_cast<int>(param); break;
        case Method::GradientXInput: break;
    }
    return p;
}

inline SweepResult run_sweep(const Network& net, const Dataset& data,
                             const std::vector<std::size_t>& image_ids,
                             const ExperimentConfig& cfg) {
    struct CellSpec {
        std::size_t image_pos, method_index, param_index;
    };
    std::vector<CellSpec> specs;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const auto grid = cfg.grid(cfg.methods[mi]);
        for (std::size_t pi = 0; pi < grid.size(); ++pi)
            for (std::size_t ii = 0; ii < image_ids.size(); ++ii) specs.push_back({ii, mi, pi});
    }

    SweepResult result;
    result.output_dim = net.output_dim;
    result.cells.resize(specs.size());

    parallel_for(specs.size(), [&](std::size_t ci) {
        const CellSpec& spec = specs[ci];
        const Method method = cfg.methods[spec.method_index];
        const double param = cfg.grid(method)[spec.param_index];
        const std::size_t image_id = image_ids[spec.image_pos];
        const Tensor& x = data.images[image_id];
        SweepCell& cell = result.cells[ci];
        cell.image_id = image_id;
        cell.method = method;
        cell.param = param;

        const std::uint64_t cell_seed = sub_seed(
            cfg.seed, (spec.method_index * 1000003ull + spec.param_index) * 1000003ull +
                          image_id + 1);
        try {
            const int label = data.labels.empty() ? -1 : data.labels[image_id];
            cell.target = resolve_target(cfg.target_rule, net, x, label);
            const MethodParams params = cell_params(cfg, method, param, cell_seed);

            LrpRulePlan plan;
            const LrpRulePlan* plan_ptr = nullptr;
            if (method == Method::Lrp) {
                plan = LrpRulePlan::digit_default(net, params.gamma, cfg.lrp_zb_first);
                plan_ptr = &plan;
            }
            RedistributionMatrix r =
                build_redistribution(net, x, method, params, plan_ptr,
                                     "img_" + std::to_string(image_id));
            cell.degenerate_columns = r.degenerate_columns;

            if (cfg.metric_spectral) cell.spectral = spectral_summary(r);

            if (cfg.stability_trials > 0) {
                const auto bound =
                    verify_stability_bound(r, cfg.stability_trials, sub_seed(cell_seed, 1));
                cell.bound_checked = true;
                cell.bound_sigma1 = bound.sigma1;
                cell.bound_max_ratio = bound.max_ratio;
                cell.bound_holds = bound.holds;
            }

            // raw attribution of the target logit, recovered from the matrix
            const bool target_degenerate =
                std::find(r.degenerate_columns.begin(), r.degenerate_columns.end(),
                          cell.target) != r.degenerate_columns.end();
            Tensor raw({r.d()});
            for (std::size_t i = 0; i < r.d(); ++i) {
                raw[i] = r.matrix(i, cell.target);
                if (!target_degenerate) raw[i] *= r.normalizers[cell.target];
            }

            if (cfg.metric_entropy) cell.entropy = shannon_entropy(raw);
            if (cfg.metric_flip) {
                cell.flip = pixel_flip(net, x, raw, cell.target,
                                       default_flip_schedule(x.size()), cfg.inpaint);
                cell.has_flip = true;
            }
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    }, cfg.workers);
    return result;
}

namespace detail {

struct MetricAgg {
    std::string metric;
    bool higher_is_better = false;
};

inline double cell_metric(const SweepCell& cell, const std::string& metric) {
    if (metric == "sigma1") return cell.spectral.sigma1;
    if (metric == "stability") return cell.spectral.stability;
    if (metric == "sensitivity") return cell.spectral.sensitivity;
    if (metric == "ssm") return cell.spectral.ssm;
    if (metric == "entropy") return cell.entropy;
    if (metric == "pf_auc") return cell.has_flip ? cell.flip.auc
                                                 : std::numeric_limits<double>::quiet_NaN();
    throw InvalidInput("unknown metric " + metric);
}

}  // namespace detail

// Writes spectral.csv, entropy.csv, flip_summary.csv, flip_curves.csv,
// degenerate.csv, aggregate.csv and a matplotlib plotting script.
inline void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& cfg,
                                const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

    {
        CsvWriter spectral(path("spectral.csv"),
                           {"image_id", "method", "param", "sigma1", "stability", "sensitivity",
                            "ssm"});
        for (const auto& c : result.cells) {
            if (!c.ok || !cfg.metric_spectral) continue;
            spectral.write_row({std::to_string(c.image_id), method_name(c.method),
                                format_g9(c.param), format_g9(c.spectral.sigma1),
                                format_g9(c.spectral.stability), format_g9(c.spectral.sensitivity),
                                format_g9(c.spectral.ssm)});
        }
    }
    if (cfg.metric_entropy) {
        CsvWriter entropy(path("entropy.csv"), {"image_id", "method", "param", "entropy"});
        for (const auto& c : result.cells) {
            if (!c.ok) continue;
            entropy.write_row({std::to_string(c.image_id), method_name(c.method),
                               format_g9(c.param), format_g9(c.entropy)});
        }
    }
    if (cfg.metric_flip) {
        CsvWriter summary(path("flip_summary.csv"), {"image_id", "method", "param", "base_logit",
                                                     "pf_auc", "pf_auc_raw"});
        CsvWriter curves(path("flip_curves.csv"),
                         {"image_id", "method", "param", "fraction", "logit"});
        for (const auto& c : result.cells) {
            if (!c.ok || !c.has_flip) continue;
            summary.write_row({std::to_string(c.image_id), method_name(c.method),
                               format_g9(c.param), format_g9(c.flip.base_logit),
                               format_g9(c.flip.auc), format_g9(c.flip.auc_raw)});
            for (std::size_t s = 0; s < c.flip.fractions.size(); ++s)
                curves.write_row({std::to_string(c.image_id), method_name(c.method),
                                  format_g9(c.param), format_g9(c.flip.fractions[s]),
                                  format_g9(c.flip.logits[s])});
        }
    }
    {
        CsvWriter degenerate(path("degenerate.csv"),
                             {"image_id", "method", "param", "column", "error"});
        for (const auto& c : result.cells) {
            for (std::size_t col : c.degenerate_columns)
                degenerate.write_row({std::to_string(c.image_id), method_name(c.method),
                                      format_g9(c.param), std::to_string(col), ""});
            if (!c.ok)
                degenerate.write_row({std::to_string(c.image_id), method_name(c.method),
                                      format_g9(c.param), "-1", c.error});
        }
    }

    // aggregates with the per-metric optimum marked by a star row
    {
        std::vector<detail::MetricAgg> metrics;
        if (cfg.metric_spectral)
            for (const char* m : {"sigma1", "stability", "sensitivity", "ssm"})
                metrics.push_back({m, std::string(m) == "ssm" || std::string(m) == "stability" ||
                                          std::string(m) == "sensitivity"});
        if (cfg.metric_entropy) metrics.push_back({"entropy", false});
        if (cfg.metric_flip) metrics.push_back({"pf_auc", false});

        CsvWriter agg(path("aggregate.csv"), {"method", "metric", "param", "count", "median",
                                              "q05", "q25", "q75", "q95", "star"});
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            const Method method = cfg.methods[mi];
            const auto grid = cfg.grid(method);
            for (const auto& metric : metrics) {
                // only ssm/pf_auc/entropy carry a quality star (stability and
                // sensitivity are the two factors, not a single score)
                const bool starrable = metric.metric == "ssm" || metric.metric == "pf_auc" ||
                                       metric.metric == "entropy";
                std::vector<double> medians(grid.size(),
                                            std::numeric_limits<double>::quiet_NaN());
                std::vector<std::vector<double>> rows(grid.size());
                for (std::size_t pi = 0; pi < grid.size(); ++pi) {
                    std::vector<double> values;
                    for (const auto& c : result.cells) {
                        if (!c.ok || c.method != method || c.param != grid[pi]) continue;
                        const double v = detail::cell_metric(c, metric.metric);
                        if (std::isfinite(v)) values.push_back(v);
                    }
                    std::sort(values.begin(), values.end());
                    if (!values.empty()) {
                        medians[pi] = quantile_sorted(values, 0.5);
                        rows[pi] = {static_cast<double>(values.size()),
                                    quantile_sorted(values, 0.5), quantile_sorted(values, 0.05),
                                    quantile_sorted(values, 0.25), quantile_sorted(values, 0.75),
                                    quantile_sorted(values, 0.95)};
                    }
                }
                std::size_t star = grid.size();
                if (starrable) {
                    for (std::size_t pi = 0; pi < grid.size(); ++pi) {
                        if (!std::isfinite(medians[pi])) continue;
                        if (star == grid.size() ||
                            (metric.higher_is_better ? medians[pi] > medians[star]
                                                     : medians[pi] < medians[star]))
                            star = pi;
                    }
                }
                for (std::size_t pi = 0; pi < grid.size(); ++pi) {
                    if (rows[pi].empty()) continue;
                    agg.write_row({method_name(method), metric.metric, format_g9(grid[pi]),
                                   std::to_string(static_cast<std::size_t>(rows[pi][0])),
                                   format_g9(rows[pi][1]), format_g9(rows[pi][2]),
                                   format_g9(rows[pi][3]), format_g9(rows[pi][4]),
                                   format_g9(rows[pi][5]), pi == star ? "*" : ""});
                }
            }
        }
    }

    // companion plotting script (data stays in the CSVs)
    {
        std::ofstream py(path("plot_sweep.py"), std::ios::binary);
        py << R"(#!/usr/bin/env python3
"""Plots sweep results written next to this script: per-method median curves
with quantile bands for stability/sensitivity, SSM, PF-AUC and entropy."""
import csv
import os
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

out_dir = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(out_dir, "aggregate.csv"))))
methods = sorted({r["method"] for r in rows})
metrics = ["stability", "sensitivity", "ssm", "pf_auc", "entropy"]
present = [m for m in metrics if any(r["metric"] == m for r in rows)]

fig, axes = plt.subplots(len(present), len(methods), squeeze=False,
                         figsize=(4 * len(methods), 2.4 * len(present)))
for col, method in enumerate(methods):
    for row_i, metric in enumerate(present):
        ax = axes[row_i][col]
        sel = [r for r in rows if r["method"] == method and r["metric"] == metric]
        sel.sort(key=lambda r: float(r["param"]))
        if not sel:
            ax.axis("off")
            continue
        xs = [float(r["param"]) for r in sel]
        med = [float(r["median"]) for r in sel]
        lo = [float(r["q25"]) for r in sel]
        hi = [float(r["q75"]) for r in sel]
        ax.plot(xs, med, lw=2)
        ax.fill_between(xs, lo, hi, alpha=0.25)
        for r in sel:
            if r["star"] == "*":
                ax.plot([float(r["param"])], [float(r["median"])], marker="*",
                        markersize=12, color="goldenrod")
        if len(xs) > 1 and min(xs) > 0 and max(xs) / max(min(xs), 1e-12) > 20:
            ax.set_xscale("log")
        if row_i == 0:
            ax.set_title(method)
        if col == 0:
            ax.set_ylabel(metric)
fig.tight_layout()
target = sys.argv[1] if len(sys.argv) > 1 else os.path.join(out_dir, "sweep.png")
fig.savefig(target, dpi=150)
print(f"wrote {target}")
)";
    }
}

}  // namespace xsa
