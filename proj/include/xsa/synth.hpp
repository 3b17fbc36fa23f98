// Deterministic synthetic digit dataset: a 5x7 glyph font rendered onto a
// 28x28 canvas with seeded affine jitter, blur and pixel noise. Serves as the
// desk-scale training corpus when the real MNIST files are not available;
// images use the same polarity and value range ([0,1], bright strokes).
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "xsa/idx.hpp"
#include "xsa/rng.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

namespace detail {

inline const std::array<std::array<std::uint8_t, 7>, 10>& digit_font() {
    // row bitmaps, 5 bits wide, MSB = leftmost column
    static const std::array<std::array<std::uint8_t, 7>, 10> font = {{
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
        {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
        {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
        {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
    }};
    return font;
}

inline double glyph_sample(int digit, double gx, double gy) {
    // bilinear sample of the 5x7 bitmap; outside is background
    const auto& rows = digit_font()[static_cast<std::size_t>(digit)];
    const auto texel = [&](int x, int y) -> double {
        if (x < 0 || x >= 5 || y < 0 || y >= 7) return 0.0;
        return (rows[static_cast<std::size_t>(y)] >> (4 - x)) & 1 ? 1.0 : 0.0;
    };
    const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0, fy = gy - y0;
    return texel(x0, y0) * (1 - fx) * (1 - fy) + texel(x0 + 1, y0) * fx * (1 - fy) +
           texel(x0, y0 + 1) * (1 - fx) * fy + texel(x0 + 1, y0 + 1) * fx * fy;
}

inline void blur3(Tensor& img) {
    // separable [1 2 1]/4 pass in each direction
    const std::size_t h = img.extent(1), w = img.extent(2);
    Tensor tmp = img;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double left = x > 0 ? img.at3(0, y, x - 1) : img.at3(0, y, x);
            const double right = x + 1 < w ? img.at3(0, y, x + 1) : img.at3(0, y, x);
            tmp.at3(0, y, x) = 0.25 * left + 0.5 * img.at3(0, y, x) + 0.25 * right;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double up = y > 0 ? tmp.at3(0, y - 1, x) : tmp.at3(0, y, x);
            const double down = y + 1 < h ? tmp.at3(0, y + 1, x) : tmp.at3(0, y, x);
            img.at3(0, y, x) = 0.25 * up + 0.5 * tmp.at3(0, y, x) + 0.25 * down;
        }
}

}  // namespace detail

inline Tensor render_synth_digit(int digit, std::uint64_t seed, double noise_std = 0.04) {
    Rng rng(seed);
    const double angle = rng.uniform(-0.3, 0.3);        // radians
    const double scale_x = rng.uniform(2.2, 3.4);       // glyph cell -> pixels
    const double scale_y = rng.uniform(2.2, 3.4);
    const double shear = rng.uniform(-0.25, 0.25);
    const double cx = 14.0 + rng.uniform(-2.5, 2.5);
    const double cy = 14.0 + rng.uniform(-2.5, 2.5);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double thickness = rng.uniform(0.6, 1.6);     // <1 thickens strokes
    const double contrast = rng.uniform(0.7, 1.0);
    // smooth background field the classifier must learn to ignore
    const double bg_amp = rng.uniform(0.0, 0.08);
    const double bg_fx = rng.uniform(-0.08, 0.08), bg_fy = rng.uniform(-0.08, 0.08);
    const double bg_phase = rng.uniform(0.0, 6.283185);

    Tensor img({1, 28, 28});
    for (std::size_t y = 0; y < 28; ++y) {
        for (std::size_t x = 0; x < 28; ++x) {
            // canvas -> glyph space (inverse rotation, shear, scale)
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double rx = ca * dx + sa * dy;
            const double ry = -sa * dx + ca * dy;
            const double gx = (rx - shear * ry) / scale_x + 2.0;
            const double gy = ry / scale_y + 3.0;
            const double stroke = std::pow(detail::glyph_sample(digit, gx, gy), thickness);
            const double bg =
                bg_amp * (0.5 + 0.5 * std::sin(6.283185 * (bg_fx * x + bg_fy * y) + bg_phase));
            img.at3(0, y, x) = contrast * stroke + bg;
        }
    }
    // 0-2 short distractor strokes
    const int distractors = static_cast<int>(rng.below(2));
    for (int s = 0; s < distractors; ++s) {
        const double sx = rng.uniform(3.0, 25.0), sy = rng.uniform(3.0, 25.0);
        const double dirx = rng.uniform(-1.0, 1.0), diry = rng.uniform(-1.0, 1.0);
        const double len = rng.uniform(3.0, 6.0), amp = rng.uniform(0.2, 0.45);
        const double norm = std::sqrt(dirx * dirx + diry * diry) + 1e-9;
        for (double t = 0.0; t <= len; t += 0.5) {
            const long px = std::lround(sx + t * dirx / norm);
            const long py = std::lround(sy + t * diry / norm);
            if (px >= 0 && px < 28 && py >= 0 && py < 28)
                img.at3(0, static_cast<std::size_t>(py), static_cast<std::size_t>(px)) += amp;
        }
    }
    detail::blur3(img);
    for (double& v : img.values()) {
        v += noise_std * rng.gaussian();
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return img;
}

// Balanced dataset of `count` images; label of image i is i mod 10.
inline Dataset make_synth_digits(std::size_t count, std::uint64_t seed, double noise_std = 0.04) {
    Dataset ds;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int digit = static_cast<int>(i % 10);
        ds.images.push_back(render_synth_digit(digit, sub_seed(seed, i), noise_std));
        ds.labels.push_back(digit);
    }
    return ds;
}

inline void save_synth_digits(const std::string& images_path, const std::string& labels_path,
                              std::size_t count, std::uint64_t seed, double noise_std = 0.04) {
    const Dataset ds = make_synth_digits(count, seed, noise_std);
    save_idx_images(images_path, ds.images);
    save_idx_labels(labels_path, ds.labels);
}

}  // namespace xsa
