// IDX file reader/writer (the de-facto MNIST format: big-endian header,
// magic 0x00000803 for u8 image stacks and 0x00000801 for label vectors).
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

struct Dataset {
    std::vector<Tensor> images;  // each {1, H, W}, values in [0, 1]
    std::vector<int> labels;     // empty when loaded without a label file

    std::size_t size() const { return images.size(); }
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IoError("truncated IDX header: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// Loads a u8 image stack; pixels are scaled to [0,1].
inline std::vector<Tensor> load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file: " + path);
    const std::uint32_t magic = detail::read_u32_be(in, path);
    if (magic != 0x00000803u)
        throw IoError("bad IDX image magic in " + path);
    const std::uint32_t n = detail::read_u32_be(in, path);
    const std::uint32_t rows = detail::read_u32_be(in, path);
    const std::uint32_t cols = detail::read_u32_be(in, path);
    if (rows == 0 || cols == 0) throw IoError("zero image dimensions in " + path);

    std::vector<Tensor> images;
    images.reserve(n);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw IoError("truncated IDX payload in " + path);
        Tensor img({1, rows, cols});
        for (std::size_t p = 0; p < buf.size(); ++p) img[p] = buf[p] / 255.0;
        images.push_back(std::move(img));
    }
    return images;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file: " + path);
    const std::uint32_t magic = detail::read_u32_be(in, path);
    if (magic != 0x00000801u)
        throw IoError("bad IDX label magic in " + path);
    const std::uint32_t n = detail::read_u32_be(in, path);
    std::vector<unsigned char> buf(n);
    if (n && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
        throw IoError("truncated IDX payload in " + path);
    return std::vector<int>(buf.begin(), buf.end());
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path = "") {
    Dataset ds;
    ds.images = load_idx_images(images_path);
    if (!labels_path.empty()) {
        ds.labels = load_idx_labels(labels_path);
        if (ds.labels.size() != ds.images.size())
            throw IoError("IDX image/label counts differ: " + images_path);
    }
    return ds;
}

inline void save_idx_images(const std::string& path, const std::vector<Tensor>& images) {
    if (images.empty()) throw InvalidInput("save_idx_images: empty dataset");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write IDX file: " + path);
    const std::size_t rows = images[0].extent(1), cols = images[0].extent(2);
    detail::write_u32_be(out, 0x00000803u);
    detail::write_u32_be(out, static_cast<std::uint32_t>(images.size()));
    detail::write_u32_be(out, static_cast<std::uint32_t>(rows));
    detail::write_u32_be(out, static_cast<std::uint32_t>(cols));
    std::vector<unsigned char> buf(rows * cols);
    for (const Tensor& img : images) {
        for (std::size_t p = 0; p < buf.size(); ++p) {
            double v = img[p] * 255.0;
            v = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
            buf[p] = static_cast<unsigned char>(v + 0.5);
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
}

inline void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write IDX file: " + path);
    detail::write_u32_be(out, 0x00000801u);
    detail::write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    for (int v : labels) {
        const unsigned char b = static_cast<unsigned char>(v);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

}  // namespace xsa
