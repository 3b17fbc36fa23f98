// Raster output for attributions and inputs: binary PPM heat maps with a
// symmetric blue-gray-red diverging mapping (zero at neutral gray, scale =
// max |value| per image), PGM for grayscale inputs, and a float64-le sidecar
// with the raw values.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "xsa/error.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

namespace detail {

inline unsigned char clamp_byte(double v) {
    return static_cast<unsigned char>(std::min(255.0, std::max(0.0, std::floor(v + 0.5))));
}

}  // namespace detail

// values laid out row-major (h x w); positive = warm, negative = cool.
inline void write_heatmap_ppm(const std::string& path, const double* values, std::size_t h,
                              std::size_t w, double scale = 0.0) {
    if (scale <= 0.0) {
        for (std::size_t i = 0; i < h * w; ++i) scale = std::max(scale, std::abs(values[i]));
        if (scale == 0.0) scale = 1.0;  // all-zero map renders neutral gray
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < h * w; ++i) {
        const double t = std::max(-1.0, std::min(1.0, values[i] / scale));
        unsigned char rgb[3];
        if (t >= 0.0) {
            rgb[0] = detail::clamp_byte(128.0 + t * 127.0);
            rgb[1] = detail::clamp_byte(128.0 - t * 128.0);
            rgb[2] = detail::clamp_byte(128.0 - t * 128.0);
        } else {
            rgb[0] = detail::clamp_byte(128.0 + t * 128.0);
            rgb[1] = detail::clamp_byte(128.0 + t * 128.0);
            rgb[2] = detail::clamp_byte(128.0 - t * 127.0);
        }
        out.write(reinterpret_cast<const char*>(rgb), 3);
    }
}

// grayscale image in [0,1]
inline void write_pgm(const std::string& path, const double* values, std::size_t h,
                      std::size_t w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < h * w; ++i) {
        const unsigned char b = detail::clamp_byte(values[i] * 255.0);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

inline void write_raw_f64(const std::string& path, const double* values, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

}  // namespace xsa
