// Model directory format: manifest.json (layer kinds, shapes, hyperparams,
// blob offsets, checksum) + weights.bin (little-endian float32, row-major,
// in manifest order). save -> load -> save is byte-identical.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xsa/error.hpp"
#include "xsa/network.hpp"

namespace xsa {

namespace detail {

inline std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline void append_f32_le(std::vector<unsigned char>& out, const Tensor& t) {
    for (double v : t.values()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        static_assert(sizeof(bits) == sizeof(f));
        std::memcpy(&bits, &f, 4);
        out.push_back(static_cast<unsigned char>(bits));
        out.push_back(static_cast<unsigned char>(bits >> 8));
        out.push_back(static_cast<unsigned char>(bits >> 16));
        out.push_back(static_cast<unsigned char>(bits >> 24));
    }
}

inline Tensor read_f32_le(const std::vector<unsigned char>& blob, std::size_t offset,
                          const std::vector<std::size_t>& shape) {
    Tensor t(shape);
    const std::size_t bytes = t.size() * 4;
    if (offset + bytes > blob.size()) throw IoError("weights.bin: blob offset past end of file");
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t bits = std::uint32_t(blob[offset + 4 * i]) |
                             (std::uint32_t(blob[offset + 4 * i + 1]) << 8) |
                             (std::uint32_t(blob[offset + 4 * i + 2]) << 16) |
                             (std::uint32_t(blob[offset + 4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        t[i] = static_cast<double>(f);
    }
    return t;
}

inline nlohmann::json shape_json(const std::vector<std::size_t>& shape) {
    return nlohmann::json(shape);
}

inline std::vector<std::size_t> shape_from_json(const nlohmann::json& j) {
    std::vector<std::size_t> s;
    for (const auto& e : j) s.push_back(e.get<std::size_t>());
    return s;
}

}  // namespace detail

inline void save_model(const Network& net, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::vector<unsigned char> blob;
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        nlohmann::json j;
        j["kind"] = layer_kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::Dense:
            case LayerKind::Conv2D:
                j["weight_shape"] = detail::shape_json(l.weights.shape());
                j["weight_offset"] = blob.size();
                detail::append_f32_le(blob, l.weights);
                if (!l.bias.empty()) {
                    j["bias_shape"] = detail::shape_json(l.bias.shape());
                    j["bias_offset"] = blob.size();
                    detail::append_f32_le(blob, l.bias);
                }
                if (l.kind == LayerKind::Conv2D) {
                    j["stride"] = l.stride;
                    j["padding"] = l.padding;
                }
                break;
            case LayerKind::MaxPool2D:
                j["pool"] = l.pool;
                break;
            default:
                break;
        }
        layers.push_back(j);
    }

    nlohmann::json manifest;
    manifest["format"] = "xsa-model";
    manifest["version"] = 1;
    manifest["input_shape"] = detail::shape_json(net.input_shape);
    manifest["output_dim"] = net.output_dim;
    manifest["layers"] = layers;
    manifest["weights_bytes"] = blob.size();
    char checksum[32];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(blob)));
    manifest["checksum_fnv1a"] = checksum;
    if (!net.input_low.empty()) {
        manifest["input_low"] = net.input_low.values();
        manifest["input_high"] = net.input_high.values();
    }

    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!mf) throw IoError("cannot write manifest.json in " + dir);
    mf << manifest.dump(2) << "\n";

    std::ofstream wf(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!wf) throw IoError("cannot write weights.bin in " + dir);
    wf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

inline Network load_model(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!mf) throw IoError("cannot open manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest.json in " + dir + ": " + e.what());
    }
    if (manifest.value("format", "") != "xsa-model")
        throw IoError("not an xsa model directory: " + dir);

    std::ifstream wf(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!wf) throw IoError("cannot open weights.bin in " + dir);
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(wf)),
                                    std::istreambuf_iterator<char>());
    if (blob.size() != manifest.value("weights_bytes", std::size_t(0)))
        throw IoError("weights.bin size does not match manifest in " + dir);
    char checksum[32];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(blob)));
    if (manifest.value("checksum_fnv1a", "") != checksum)
        throw IoError("weights.bin checksum mismatch in " + dir);

    Network net;
    net.input_shape = detail::shape_from_json(manifest.at("input_shape"));
    net.output_dim = manifest.at("output_dim").get<std::size_t>();
    for (const auto& j : manifest.at("layers")) {
        const LayerKind kind = layer_kind_from_name(j.at("kind").get<std::string>());
        Layer l;
        l.kind = kind;
        if (kind == LayerKind::Dense || kind == LayerKind::Conv2D) {
            l.weights = detail::read_f32_le(blob, j.at("weight_offset").get<std::size_t>(),
                                            detail::shape_from_json(j.at("weight_shape")));
            if (j.contains("bias_shape"))
                l.bias = detail::read_f32_le(blob, j.at("bias_offset").get<std::size_t>(),
                                             detail::shape_from_json(j.at("bias_shape")));
            if (kind == LayerKind::Conv2D) {
                l.stride = j.value("stride", std::size_t(1));
                l.padding = j.value("padding", std::size_t(0));
            }
        } else if (kind == LayerKind::MaxPool2D) {
            l.pool = j.value("pool", std::size_t(2));
        }
        net.layers.push_back(std::move(l));
    }
    if (manifest.contains("input_low")) {
        std::vector<double> low = manifest.at("input_low").get<std::vector<double>>();
        std::vector<double> high = manifest.at("input_high").get<std::vector<double>>();
        const std::size_t low_n = low.size(), high_n = high.size();
        net.input_low = Tensor({low_n}, std::move(low));
        net.input_high = Tensor({high_n}, std::move(high));
    }
    net.validate();
    return net;
}

}  // namespace xsa
