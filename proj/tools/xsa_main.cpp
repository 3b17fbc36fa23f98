// xsa command-line tool: train a digit model, run explanation sweeps, render
// heat maps, flip pixels, expand explanations over singular-value bins and
// emit the layer-norm theory report. Every command is reproducible from its
// arguments: re-running with the same config and seed writes identical bytes.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xsa/config.hpp"
#include "xsa/csv.hpp"
#include "xsa/evaluation.hpp"
#include "xsa/explainers.hpp"
#include "xsa/heatmap.hpp"
#include "xsa/idx.hpp"
#include "xsa/model_io.hpp"
#include "xsa/network.hpp"
#include "xsa/redistribution.hpp"
#include "xsa/spectral.hpp"
#include "xsa/sweep.hpp"
#include "xsa/synth.hpp"
#include "xsa/theory.hpp"
#include "xsa/train.hpp"

namespace fs = std::filesystem;

namespace {

void require_exists(const std::string& path, const char* what) {
    if (path.empty() || !fs::exists(path))
        throw xsa::ConfigError(std::string(what) + " path does not exist: " + path);
}

xsa::Dataset load_dataset_checked(const std::string& images, const std::string& labels) {
    require_exists(images, "images");
    if (!labels.empty()) require_exists(labels, "labels");
    return xsa::load_idx(images, labels);
}

std::vector<std::size_t> resolve_image_ids(const xsa::ExperimentConfig& cfg,
                                           std::size_t available) {
    std::vector<std::size_t> ids = cfg.image_ids;
    if (ids.empty()) {
        const std::size_t n = std::min(cfg.image_count, available);
        for (std::size_t i = 0; i < n; ++i) ids.push_back(i);
    }
    for (std::size_t id : ids)
        if (id >= available)
            throw xsa::ConfigError("image id " + std::to_string(id) + " out of range (" +
                                   std::to_string(available) + " images)");
    return ids;
}

xsa::MethodParams single_params(xsa::Method method, double param, int sg_samples,
                                std::size_t patch, double baseline, std::uint64_t seed) {
    xsa::MethodParams p;
    p.seed = seed;
    p.samples = sg_samples;
    p.patch_size = patch;
    p.baseline_value = baseline;
    switch (method) {
        case xsa::Method::Lrp: p.gamma = param; break;
        case xsa::Method::SmoothGrad: p.noise_std = param; break;
        case xsa::Method::IntegratedGradients: p.steps = static_cast<int>(param); break;
        case xsa::Method::ShapleySampling: p.cycles = static_cast<int>(param); break;
        case xsa::Method::GradientXInput: break;
    }
    return p;
}

// shared flags for the single-image commands (heatmap / flip / expand)
struct SingleImageArgs {
    std::string model_dir, images_path, labels_path;
    std::size_t image_id = 0;
    std::string method = "lrp";
    double param = 0.1;
    int sg_samples = 10;
    std::size_t patch = 1;
    double baseline = 0.0;
    std::string target = "predicted";
    std::uint64_t seed = 0;
    bool zb_first = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--model", model_dir, "model directory")->required();
        cmd->add_option("--images", images_path, "IDX image file")->required();
        cmd->add_option("--labels", labels_path, "IDX label file");
        cmd->add_option("--id", image_id, "image index");
        cmd->add_option("--method", method, "gxi|smoothgrad|ig|lrp|shapley");
        cmd->add_option("--param", param, "method parameter (gamma / noise / steps / cycles)");
        cmd->add_option("--sg-samples", sg_samples, "SmoothGrad sample count");
        cmd->add_option("--patch", patch, "Shapley patch edge");
        cmd->add_option("--baseline", baseline, "removal / IG baseline value");
        cmd->add_option("--target", target, "predicted | label | <index>");
        cmd->add_option("--seed", seed, "RNG seed");
        cmd->add_flag("--zb-first", zb_first, "use the z^B rule on the first layer (LRP)");
    }

    struct Loaded {
        xsa::Network net;
        xsa::Dataset data;
        xsa::Tensor x;
        std::size_t target_index;
        xsa::Method method;
        xsa::MethodParams params;
        xsa::LrpRulePlan plan;
        const xsa::LrpRulePlan* plan_ptr = nullptr;
    };

    Loaded load() const {
        require_exists(model_dir, "model");
        Loaded l;
        l.net = xsa::load_model(model_dir);
        l.data = load_dataset_checked(images_path, labels_path);
        if (image_id >= l.data.images.size())
            throw xsa::ConfigError("image id out of range: " + std::to_string(image_id));
        l.x = l.data.images[image_id];
        const int label = l.data.labels.empty() ? -1 : l.data.labels[image_id];
        l.target_index = xsa::resolve_target(target, l.net, l.x, label);
        l.method = xsa::method_from_name(method);
        l.params = single_params(l.method, param, sg_samples, patch, baseline, seed);
        if (l.method == xsa::Method::Lrp) {
            l.plan = xsa::LrpRulePlan::digit_default(l.net, l.params.gamma, zb_first);
            l.plan_ptr = &l.plan;
        }
        return l;
    }
};

int cmd_synth_data(const std::string& out_dir, std::size_t count, std::uint64_t seed,
                   double noise) {
    fs::create_directories(out_dir);
    xsa::save_synth_digits((fs::path(out_dir) / "images.idx").string(),
                           (fs::path(out_dir) / "labels.idx").string(), count, seed, noise);
    std::printf("wrote %zu synthetic digits to %s\n", count, out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& images, const std::string& labels, const std::string& out_dir,
              const xsa::TrainConfig& cfg) {
    const xsa::Dataset data = load_dataset_checked(images, labels);
    if (data.labels.empty()) throw xsa::ConfigError("training requires a labels file");
    xsa::TrainResult result = xsa::train_small_cnn(data, cfg);
    xsa::save_model(result.net, out_dir);
    {
        xsa::CsvWriter log((fs::path(out_dir) / "training_log.csv").string(),
                           {"epoch", "loss", "holdout_accuracy"});
        for (std::size_t e = 0; e < result.loss_history.size(); ++e)
            log.write_row({std::to_string(e + 1), xsa::format_g9(result.loss_history[e]),
                           xsa::format_g9(result.holdout_accuracy[e])});
    }
    std::printf("trained to %.4f holdout accuracy in %zu epochs; model in %s\n",
                result.holdout_accuracy.back(), result.loss_history.size(), out_dir.c_str());
    return 0;
}

int cmd_sweep(xsa::ExperimentConfig cfg) {
    cfg.validate();
    const xsa::Network net = xsa::load_model(cfg.model_dir);
    const xsa::Dataset data = load_dataset_checked(cfg.images_path, cfg.labels_path);
    const auto ids = resolve_image_ids(cfg, data.images.size());

    const xsa::SweepResult result = xsa::run_sweep(net, data, ids, cfg);
    xsa::write_sweep_outputs(result, cfg, cfg.out_dir);

    // resolved-config echo for reproducibility
    std::ofstream echo(fs::path(cfg.out_dir) / "config_used.txt", std::ios::binary);
    echo << "model = " << cfg.model_dir << "\nimages = " << cfg.images_path
         << "\nlabels = " << cfg.labels_path << "\nimage_count = " << ids.size()
         << "\nseed = " << cfg.seed << "\ntarget = " << cfg.target_rule
         << "\ninpaint = " << xsa::inpaint_name(cfg.inpaint) << "\nmethods =";
    for (auto m : cfg.methods) echo << " " << xsa::method_name(m);
    echo << "\n";

    std::size_t failed = 0;
    for (const auto& c : result.cells) failed += !c.ok;
    std::printf("sweep: %zu cells (%zu failed) -> %s\n", result.cells.size(), failed,
                cfg.out_dir.c_str());
    return 0;
}

int cmd_heatmap(const SingleImageArgs& args, const std::string& out_prefix) {
    auto l = args.load();
    const xsa::Attribution attr =
        xsa::explain(l.net, l.x, l.target_index, l.method, l.params, l.plan_ptr);
    const std::size_t h = l.x.extent(1), w = l.x.extent(2);
    xsa::write_heatmap_ppm(out_prefix + ".ppm", attr.values.data(), h, w);
    xsa::write_raw_f64(out_prefix + ".f64", attr.values.data(), attr.values.size());
    xsa::write_pgm(out_prefix + "_input.pgm", l.x.data(), h, w);
    std::printf("wrote %s.ppm (target %zu)\n", out_prefix.c_str(), l.target_index);
    return 0;
}

int cmd_flip(const SingleImageArgs& args, const std::string& inpaint,
             const std::string& out_prefix) {
    auto l = args.load();
    const xsa::Attribution attr =
        xsa::explain(l.net, l.x, l.target_index, l.method, l.params, l.plan_ptr);
    const xsa::FlipCurve curve =
        xsa::pixel_flip(l.net, l.x, attr.values, l.target_index,
                        xsa::default_flip_schedule(l.x.size()), xsa::inpaint_from_name(inpaint));
    {
        xsa::CsvWriter curve_csv(out_prefix + "_curve.csv",
                                 {"image_id", "method", "param", "fraction", "logit"});
        for (std::size_t s = 0; s < curve.fractions.size(); ++s)
            curve_csv.write_row({std::to_string(args.image_id), xsa::method_name(l.method),
                                 xsa::format_g9(args.param), xsa::format_g9(curve.fractions[s]),
                                 xsa::format_g9(curve.logits[s])});
    }
    {
        xsa::CsvWriter summary(out_prefix + "_summary.csv",
                               {"image_id", "method", "param", "base_logit", "pf_auc",
                                "pf_auc_raw"});
        summary.write_row({std::to_string(args.image_id), xsa::method_name(l.method),
                           xsa::format_g9(args.param), xsa::format_g9(curve.base_logit),
                           xsa::format_g9(curve.auc), xsa::format_g9(curve.auc_raw)});
    }
    std::printf("pf_auc %.6f (base logit %.6f) -> %s_curve.csv\n", curve.auc, curve.base_logit,
                out_prefix.c_str());
    return 0;
}

int cmd_expand(const SingleImageArgs& args, const std::string& bins_text,
               const std::string& out_dir, bool export_matrix) {
    auto l = args.load();
    fs::create_directories(out_dir);

    const xsa::RedistributionMatrix r = xsa::build_redistribution(
        l.net, l.x, l.method, l.params, l.plan_ptr, "img_" + std::to_string(args.image_id));

    std::vector<std::pair<std::size_t, std::size_t>> bins;
    if (!bins_text.empty()) {
        xsa::ExperimentConfig tmp;
        xsa::apply_config_entry(tmp, "bins", bins_text);
        bins = tmp.bins;
    } else {
        bins = xsa::default_bins(std::min(r.d(), r.h()));
    }

    const xsa::Readout readout = xsa::Readout::basis(r.h(), l.target_index);
    const xsa::ExpandedExplanation expansion = xsa::expand_explanation(r, readout, bins);
    if (expansion.clipped)
        std::fprintf(stderr, "warning: bin edges beyond K were clipped\n");

    const std::size_t h = l.x.extent(1), w = l.x.extent(2);
    for (const auto& bin : expansion.bins) {
        char name[128];
        std::snprintf(name, sizeof(name), "bin_%zu_%zu_frac_%.3f.ppm", bin.lo, bin.hi,
                      bin.norm_fraction);
        xsa::write_heatmap_ppm((fs::path(out_dir) / name).string(), bin.map.data(), h, w);
    }
    xsa::write_heatmap_ppm((fs::path(out_dir) / "full.ppm").string(), expansion.full.data(), h, w);
    {
        xsa::CsvWriter cum((fs::path(out_dir) / "cumulative.csv").string(),
                           {"k", "cumulative_norm_fraction"});
        for (std::size_t k = 0; k < expansion.cumulative.size(); ++k)
            cum.write_row({std::to_string(k + 1), xsa::format_g9(expansion.cumulative[k])});
    }
    {
        xsa::CsvWriter fractions((fs::path(out_dir) / "bins.csv").string(),
                                 {"lo", "hi", "norm_fraction"});
        for (const auto& bin : expansion.bins)
            fractions.write_row({std::to_string(bin.lo), std::to_string(bin.hi),
                                 xsa::format_g9(bin.norm_fraction)});
    }
    if (export_matrix)
        xsa::save_redistribution(r, (fs::path(out_dir) / "R.json").string(),
                                 (fs::path(out_dir) / "R.bin").string());
    std::printf("expanded %zu bins -> %s\n", expansion.bins.size(), out_dir.c_str());
    return 0;
}

int cmd_theory_report(const std::string& model_dir, const std::string& images_path,
                      std::size_t image_id, const std::string& gammas_text,
                      const std::string& out_path) {
    require_exists(model_dir, "model");
    const xsa::Network net = xsa::load_model(model_dir);
    const xsa::Dataset data = load_dataset_checked(images_path, "");
    if (image_id >= data.images.size())
        throw xsa::ConfigError("image id out of range: " + std::to_string(image_id));
    const xsa::Tensor& x = data.images[image_id];

    std::vector<double> gammas;
    for (const auto& item : xsa::detail::split_list(gammas_text)) gammas.push_back(std::stod(item));
    if (gammas.empty()) throw xsa::ConfigError("no gamma values given");

    const xsa::ForwardTrace trace = xsa::forward(net, x);
    xsa::CsvWriter csv(out_path, {"layer", "gamma", "c", "analytic_l1", "numeric_l1",
                                  "product_bound", "realized_ratio"});
    for (double gamma : gammas) {
        const auto report = xsa::network_bound_report(net, x, gamma);
        for (const auto& row : report.per_layer) {
            // unrolled conv matrices get large; compute the numeric norm only
            // at desk scale
            double numeric = std::numeric_limits<double>::quiet_NaN();
            const xsa::Layer& layer = net.layers[row.layer_index];
            const xsa::Tensor& a = trace.layer_input(row.layer_index);
            std::size_t out_total = layer.weights.extent(0);
            if (layer.kind == xsa::LayerKind::Conv2D) {
                const auto os = xsa::layer_output_shape(layer, a.shape());
                out_total = os[0] * os[1] * os[2];
            }
            if (a.size() * out_total <= 4000000)
                numeric =
                    xsa::l1_operator_norm(xsa::explicit_layer_matrix(layer, a, gamma));
            csv.write_row({std::to_string(row.layer_index), xsa::format_g9(gamma),
                           xsa::format_g9(row.c), xsa::format_g9(row.analytic_l1),
                           xsa::format_g9(numeric), xsa::format_g9(report.product_bound),
                           xsa::format_g9(report.max_realized)});
        }
    }
    std::printf("theory report for image %zu -> %s\n", image_id, out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectral analysis of neural-network explanations"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic digit dataset (IDX)");
    std::string synth_out = "data";
    std::size_t synth_count = 2000;
    std::uint64_t synth_seed = 0;
    double synth_noise = 0.04;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--count", synth_count, "number of images");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--noise", synth_noise, "pixel noise standard deviation");

    // train
    auto* train = app.add_subcommand("train", "train the digit CNN on an IDX dataset");
    std::string train_images, train_labels, train_out = "model";
    xsa::TrainConfig train_cfg;
    train->add_option("--images", train_images, "IDX image file")->required();
    train->add_option("--labels", train_labels, "IDX label file")->required();
    train->add_option("--out", train_out, "model output directory");
    train->add_option("--seed", train_cfg.seed, "RNG seed");
    train->add_option("--epochs", train_cfg.epochs, "maximum epochs");
    train->add_option("--batch", train_cfg.batch_size, "batch size");
    train->add_option("--lr", train_cfg.learning_rate, "SGD learning rate");
    train->add_option("--target-acc", train_cfg.target_accuracy, "holdout accuracy to stop at");
    train->add_option("--holdout", train_cfg.holdout_fraction, "holdout fraction");
    train->add_option("--workers", train_cfg.workers, "worker threads (0 = auto)");
    train->add_flag("--verbose", train_cfg.verbose, "log per-epoch progress");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run the (image x method x parameter) experiment");
    std::string sweep_config;
    std::vector<std::string> sweep_overrides;
    sweep->add_option("--config", sweep_config, "key = value config file");
    sweep->add_option("--set", sweep_overrides,
                      "config override key=value (repeatable, wins over --config)");

    // single-image commands
    SingleImageArgs heat_args, flip_args, expand_args;
    auto* heatmap = app.add_subcommand("heatmap", "render a signed attribution heat map");
    heat_args.add_to(heatmap);
    std::string heat_out = "heatmap";
    heatmap->add_option("--out", heat_out, "output prefix");

    auto* flip = app.add_subcommand("flip", "pixel-flipping curve for one image");
    flip_args.add_to(flip);
    std::string flip_inpaint = "diffusion", flip_out = "flip";
    flip->add_option("--inpaint", flip_inpaint, "mean_fill | diffusion | zero_fill");
    flip->add_option("--out", flip_out, "output prefix");

    auto* expand = app.add_subcommand("expand", "decompose an explanation over singular values");
    expand_args.add_to(expand);
    std::string expand_bins, expand_out = "expand";
    bool expand_export = false;
    expand->add_option("--bins", expand_bins, "bin ranges lo:hi,lo:hi,...");
    expand->add_option("--out", expand_out, "output directory");
    expand->add_flag("--export-matrix", expand_export, "also export the redistribution matrix");

    // theory-report
    auto* theory = app.add_subcommand("theory-report", "layer norm bounds vs realized ratios");
    std::string theory_model, theory_images, theory_gammas = "0.01,0.02,0.05,0.1,0.2,0.5,1.0";
    std::string theory_out = "theory.csv";
    std::size_t theory_id = 0;
    theory->add_option("--model", theory_model, "model directory")->required();
    theory->add_option("--images", theory_images, "IDX image file")->required();
    theory->add_option("--id", theory_id, "image index");
    theory->add_option("--gammas", theory_gammas, "comma-separated gamma grid");
    theory->add_option("--out", theory_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(synth_out, synth_count, synth_seed, synth_noise);
        if (train->parsed()) return cmd_train(train_images, train_labels, train_out, train_cfg);
        if (sweep->parsed()) {
            xsa::ExperimentConfig cfg;
            if (!sweep_config.empty()) cfg = xsa::load_config(sweep_config);
            for (const std::string& kv : sweep_overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos)
                    throw xsa::ConfigError("override must be key=value: " + kv);
                xsa::apply_config_entry(cfg, xsa::detail::trim(kv.substr(0, eq)),
                                        xsa::detail::trim(kv.substr(eq + 1)));
            }
            return cmd_sweep(std::move(cfg));
        }
        if (heatmap->parsed()) return cmd_heatmap(heat_args, heat_out);
        if (flip->parsed()) return cmd_flip(flip_args, flip_inpaint, flip_out);
        if (expand->parsed()) return cmd_expand(expand_args, expand_bins, expand_out, expand_export);
        if (theory->parsed())
            return cmd_theory_report(theory_model, theory_images, theory_id, theory_gammas,
                                     theory_out);
    } catch (const xsa::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
