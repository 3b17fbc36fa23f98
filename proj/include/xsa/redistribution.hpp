// The d x h redistribution matrix: column j is the attribution of output j
// normalized to sum 1, so any output-space quantity y propagates back to the
// input as the matrix-vector product R y.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xsa/error.hpp"
#include "xsa/explainers.hpp"
#include "xsa/linalg.hpp"
#include "xsa/network.hpp"

namespace xsa {

struct RedistributionMatrix {
    Matrix matrix;                                // d x h, columns sum to 1
    std::vector<double> normalizers;              // raw column sums 1^T E(z_j)
    std::vector<std::size_t> degenerate_columns;  // uniform-filled and flagged
    Method method = Method::Lrp;
    MethodParams params;
    std::string input_id;
    std::vector<std::size_t> input_shape;  // original geometry, for rendering

    std::size_t d() const { return matrix.rows(); }
    std::size_t h() const { return matrix.cols(); }
};

struct Readout {
    std::vector<double> y;

    static Readout basis(std::size_t h, std::size_t j) {
        Readout r;
        r.y.assign(h, 0.0);
        r.y.at(j) = 1.0;
        return r;
    }
    static Readout contrast(std::size_t h, std::size_t j, std::size_t jprime) {
        Readout r;
        r.y.assign(h, 0.0);
        r.y.at(j) = 1.0;
        r.y.at(jprime) = -1.0;
        return r;
    }
    // w odot z: explain a weighted readout of the outputs
    static Readout weighted(const std::vector<double>& w, const std::vector<double>& z) {
        if (w.size() != z.size()) throw ShapeError("readout: weight/output dimension mismatch");
        Readout r;
        r.y.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) r.y[i] = w[i] * z[i];
        return r;
    }
};

// A column is unusable when its normalizer is vanishing relative to the
// column's mass (or the column is exactly zero).
inline bool degenerate_column_sum(double column_sum, double column_abs_sum) {
    return column_abs_sum == 0.0 || std::abs(column_sum) < 1e-8 * column_abs_sum;
}

inline RedistributionMatrix build_redistribution(const Network& net, const Tensor& x,
                                                 Method method, const MethodParams& params,
                                                 const LrpRulePlan* plan = nullptr,
                                                 std::string input_id = "") {
    if (net.output_dim < 2)
        throw InvalidInput("build_redistribution: need at least 2 outputs for a spectrum");
    Matrix raw = attribution_matrix(net, x, method, params, plan);
    const std::size_t d = raw.rows(), h = raw.cols();

    RedistributionMatrix result;
    result.method = method;
    result.params = params;
    result.input_id = std::move(input_id);
    result.input_shape = x.shape();
    result.normalizers.resize(h);

    for (std::size_t j = 0; j < h; ++j) {
        double colsum = 0.0, abssum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            colsum += raw(i, j);
            abssum += std::abs(raw(i, j));
        }
        result.normalizers[j] = colsum;
        if (degenerate_column_sum(colsum, abssum)) {
            result.degenerate_columns.push_back(j);
            for (std::size_t i = 0; i < d; ++i) raw(i, j) = 1.0 / static_cast<double>(d);
        } else {
            for (std::size_t i = 0; i < d; ++i) raw(i, j) /= colsum;
        }
    }
    if (result.degenerate_columns.size() * 2 >= h)
        throw DegenerateMatrix("build_redistribution: " +
                               std::to_string(result.degenerate_columns.size()) + " of " +
                               std::to_string(h) + " columns are degenerate");
    result.matrix = std::move(raw);
    return result;
}

// E(y) = R y.
inline Tensor explain_readout(const RedistributionMatrix& r, const Readout& readout) {
    if (readout.y.size() != r.h()) throw ShapeError("explain_readout: readout dimension mismatch");
    for (double v : readout.y)
        if (!std::isfinite(v)) throw InvalidInput("explain_readout: non-finite readout");
    return Tensor({r.d()}, matvec(r.matrix, readout.y));
}

// ---------------------------------------------------------------------------
// Export format: JSON header next to a column-major float64-le binary.

inline void save_redistribution(const RedistributionMatrix& r, const std::string& json_path,
                                const std::string& bin_path) {
    nlohmann::json header;
    header["format"] = "xsa-redistribution";
    header["d"] = r.d();
    header["h"] = r.h();
    header["layout"] = "column-major";
    header["dtype"] = "float64-le";
    header["method"] = method_name(r.method);
    header["param"] = r.params.swept_value(r.method);
    header["seed"] = r.params.seed;
    header["input_id"] = r.input_id;
    header["input_shape"] = r.input_shape;
    header["normalizers"] = r.normalizers;
    header["degenerate_columns"] = r.degenerate_columns;

    std::ofstream jf(json_path, std::ios::binary);
    if (!jf) throw IoError("cannot write " + json_path);
    jf << header.dump(2) << "\n";

    std::ofstream bf(bin_path, std::ios::binary);
    if (!bf) throw IoError("cannot write " + bin_path);
    for (std::size_t j = 0; j < r.h(); ++j)
        for (std::size_t i = 0; i < r.d(); ++i) {
            const double v = r.matrix(i, j);
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            unsigned char bytes[8];
            for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
            bf.write(reinterpret_cast<const char*>(bytes), 8);
        }
}

inline Matrix load_redistribution_matrix(const std::string& json_path,
                                         const std::string& bin_path) {
    std::ifstream jf(json_path, std::ios::binary);
    if (!jf) throw IoError("cannot open " + json_path);
    nlohmann::json header;
    jf >> header;
    if (header.value("format", "") != "xsa-redistribution")
        throw IoError("not a redistribution export: " + json_path);
    const std::size_t d = header.at("d").get<std::size_t>();
    const std::size_t h = header.at("h").get<std::size_t>();

    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) throw IoError("cannot open " + bin_path);
    Matrix m(d, h);
    for (std::size_t j = 0; j < h; ++j)
        for (std::size_t i = 0; i < d; ++i) {
            unsigned char bytes[8];
            if (!bf.read(reinterpret_cast<char*>(bytes), 8))
                throw IoError("truncated matrix binary: " + bin_path);
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[b]) << (8 * b);
            double v;
            std::memcpy(&v, &bits, 8);
            m(i, j) = v;
        }
    return m;
}

}  // namespace xsa
