// Baseline evaluation metrics: pixel-flipping with PF-AUC, the two inpainting
// fills used to remove features, and Shannon entropy of an attribution.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/network.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

enum class InpaintMethod { MeanFill, Diffusion, ZeroFill };

inline const char* inpaint_name(InpaintMethod m) {
    switch (m) {
        case InpaintMethod::MeanFill: return "mean_fill";
        case InpaintMethod::Diffusion: return "diffusion";
        case InpaintMethod::ZeroFill: return "zero_fill";
    }
    return "?";
}

inline InpaintMethod inpaint_from_name(const std::string& s) {
    if (s == "mean_fill") return InpaintMethod::MeanFill;
    if (s == "diffusion") return InpaintMethod::Diffusion;
    if (s == "zero_fill") return InpaintMethod::ZeroFill;
    throw InvalidInput("unknown inpaint method: " + s);
}

// Fills the masked pixels of a single-channel image. MeanFill replaces each
// masked pixel with the mean of unmasked pixels in a (2r+1)^2 neighborhood
// (falling back to the global unmasked mean when the window has none).
// Diffusion relaxes the Laplace equation on the masked set by Jacobi sweeps
// with the unmasked pixels as Dirichlet data, until the largest update drops
// below 1e-6.
inline Tensor inpaint(const Tensor& image, const std::vector<bool>& mask, InpaintMethod method,
                      std::size_t radius = 3) {
    if (image.rank() != 3 || image.extent(0) != 1)
        throw ShapeError("inpaint: expected a {1,H,W} image");
    const std::size_t h = image.extent(1), w = image.extent(2);
    if (mask.size() != h * w) throw ShapeError("inpaint: mask size mismatch");

    std::size_t masked_n = 0;
    double unmasked_sum = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) ++masked_n;
        else unmasked_sum += image[i];
    }
    if (masked_n == 0) throw InvalidInput("inpaint: empty mask");
    if (masked_n == mask.size()) throw InvalidInput("inpaint: fully masked image");
    const double global_mean = unmasked_sum / static_cast<double>(mask.size() - masked_n);

    Tensor out = image;
    if (method == InpaintMethod::ZeroFill) {
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) out[i] = 0.0;
        return out;
    }
    if (method == InpaintMethod::MeanFill) {
        const long r = static_cast<long>(radius);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (!mask[y * w + x]) continue;
                double sum = 0.0;
                std::size_t count = 0;
                for (long dy = -r; dy <= r; ++dy) {
                    const long yy = static_cast<long>(y) + dy;
                    if (yy < 0 || yy >= static_cast<long>(h)) continue;
                    for (long dx = -r; dx <= r; ++dx) {
                        const long xx = static_cast<long>(x) + dx;
                        if (xx < 0 || xx >= static_cast<long>(w)) continue;
                        const std::size_t idx = static_cast<std::size_t>(yy) * w +
                                                static_cast<std::size_t>(xx);
                        if (!mask[idx]) {
                            sum += image[idx];
                            ++count;
                        }
                    }
                }
                out[y * w + x] = count ? sum / static_cast<double>(count) : global_mean;
            }
        return out;
    }

    // diffusion: init masked pixels at the global mean, then Jacobi sweeps
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out[i] = global_mean;
    Tensor next = out;
    const int max_iters = 100000;
    for (int iter = 0; iter < max_iters; ++iter) {
        double max_update = 0.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t idx = y * w + x;
                if (!mask[idx]) continue;
                double sum = 0.0;
                int count = 0;
                if (y > 0) { sum += out[idx - w]; ++count; }
                if (y + 1 < h) { sum += out[idx + w]; ++count; }
                if (x > 0) { sum += out[idx - 1]; ++count; }
                if (x + 1 < w) { sum += out[idx + 1]; ++count; }
                const double v = sum / count;
                max_update = std::max(max_update, std::abs(v - out[idx]));
                next[idx] = v;
            }
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) out[i] = next[i];
        if (max_update < 1e-6) return out;
    }
    throw ConvergenceFailure("inpaint diffusion did not settle", 0.0, max_iters);
}

// Flip order: attribution values descending, ties broken toward the lower
// feature index.
inline std::vector<std::size_t> flip_order(const Tensor& attribution) {
    std::vector<std::size_t> order(attribution.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return attribution[a] > attribution[b];
    });
    return order;
}

// One feature per step up to 5% of d (quarter-percent strides for large d).
inline std::vector<std::size_t> default_flip_schedule(std::size_t d) {
    const std::size_t limit = d / 20;
    std::vector<std::size_t> schedule;
    if (limit == 0) return schedule;
    const std::size_t step = d <= 1024 ? 1 : std::max<std::size_t>(1, d / 400);
    for (std::size_t k = step > 1 ? step : 1; k <= limit; k += step) schedule.push_back(k);
    if (schedule.empty() || schedule.back() != limit) schedule.push_back(limit);
    return schedule;
}

struct FlipCurve {
    double base_logit = 0.0;             // z_j before any flip
    std::vector<double> fractions;       // k / d per schedule step
    std::vector<double> logits;          // z_j after flipping top-k
    std::vector<std::size_t> flipped;    // k per step
    double auc = 0.0;                    // mean logit level over [0, max fraction]
    double auc_raw = 0.0;                // plain trapezoid integral
};

// Flips the top-k features (per schedule) of the ORIGINAL image with the
// cumulative mask and records the target logit. The curve is anchored at
// (0, base logit); auc is its trapezoid integral divided by the fraction span
// so that schedules of different resolution stay comparable.
inline FlipCurve pixel_flip(const Network& net, const Tensor& x, const Tensor& attribution,
                            std::size_t target, const std::vector<std::size_t>& schedule,
                            InpaintMethod method, std::size_t radius = 3) {
    const std::size_t d = x.size();
    if (attribution.size() != d) throw ShapeError("pixel_flip: attribution dimension mismatch");
    for (std::size_t i = 0; i + 1 < schedule.size(); ++i)
        if (schedule[i] >= schedule[i + 1])
            throw InvalidInput("pixel_flip: schedule must strictly ascend");
    if (!schedule.empty() && schedule.back() > d / 20)
        throw InvalidInput("pixel_flip: schedule exceeds 5% of the features");

    FlipCurve curve;
    curve.base_logit = forward(net, x).output()[target];
    if (schedule.empty()) {
        curve.auc = curve.base_logit;
        return curve;
    }

    const auto order = flip_order(attribution);
    std::vector<bool> mask(d, false);
    std::size_t applied = 0;
    for (const std::size_t k : schedule) {
        while (applied < k) mask[order[applied++]] = true;
        const Tensor flipped = inpaint(x, mask, method, radius);
        curve.flipped.push_back(k);
        curve.fractions.push_back(static_cast<double>(k) / static_cast<double>(d));
        curve.logits.push_back(forward(net, flipped).output()[target]);
    }

    double prev_f = 0.0, prev_z = curve.base_logit, integral = 0.0;
    for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
        integral += 0.5 * (prev_z + curve.logits[i]) * (curve.fractions[i] - prev_f);
        prev_f = curve.fractions[i];
        prev_z = curve.logits[i];
    }
    curve.auc_raw = integral;
    curve.auc = integral / curve.fractions.back();
    return curve;
}

// Natural-log Shannon entropy of the normalized absolute attribution.
inline double shannon_entropy(const Tensor& attribution) {
    double total = 0.0;
    for (double v : attribution.values()) {
        if (!std::isfinite(v)) throw InvalidInput("shannon_entropy: non-finite attribution");
        total += std::abs(v);
    }
    if (total == 0.0) throw InvalidInput("shannon_entropy: all-zero attribution");
    double h = 0.0;
    for (double v : attribution.values()) {
        const double p = std::abs(v) / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

}  // namespace xsa
