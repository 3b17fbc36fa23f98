// Spectral characterization of a redistribution matrix: stability 1/sigma1,
// sensitivity ||sigma||_2, their product SSM, the stability bound check, and
// the rank-decomposition of explanations into singular-value bins.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/linalg.hpp"
#include "xsa/redistribution.hpp"
#include "xsa/rng.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

struct SpectralSummary {
    std::vector<double> sigma;  // full spectrum when available (K <= 1024)
    double sigma1 = 0.0;
    double stability = 0.0;    // 1 / sigma1
    double sensitivity = 0.0;  // ||sigma||_2 == Frobenius norm
    double ssm = 0.0;          // stability * sensitivity
    std::size_t K = 0;
    bool full_spectrum = true;
};

inline SpectralSummary spectral_summary(const Matrix& m) {
    SpectralSummary s;
    s.K = std::min(m.rows(), m.cols());
    if (s.K <= 1024) {
        SvdResult r = svd(m);
        s.sigma = std::move(r.singular_values);
        s.sigma1 = s.sigma.front();
        double sq = 0.0;
        for (double v : s.sigma) sq += v * v;
        s.sensitivity = std::sqrt(sq);
    } else {
        s.full_spectrum = false;
        s.sigma1 = top_singular_value(m, 1e-12);
        s.sensitivity = frobenius_norm(m);
    }
    if (s.sigma1 <= 0.0) throw InvalidInput("spectral_summary: zero matrix has no stability");
    s.stability = 1.0 / s.sigma1;
    s.ssm = s.stability * s.sensitivity;
    return s;
}

inline SpectralSummary spectral_summary(const RedistributionMatrix& r) {
    return spectral_summary(r.matrix);
}

struct StabilityBoundReport {
    double sigma1 = 0.0;
    double max_ratio = 0.0;           // max over trials of ||Ry|| / ||y||
    std::vector<double> maximizing_y;
    std::size_t trials = 0;
    bool holds = false;               // max_ratio <= sigma1 * (1 + 1e-9)
};

// Samples random readouts and verifies ||Ry||_2 / ||y||_2 <= sigma1.
inline StabilityBoundReport verify_stability_bound(const Matrix& m, std::size_t trials,
                                                   std::uint64_t seed) {
    if (trials < 1) throw InvalidInput("verify_stability_bound: trials must be >= 1");
    StabilityBoundReport report;
    report.trials = trials;
    report.sigma1 = std::min(m.rows(), m.cols()) <= 1024 ? svd(m).singular_values[0]
                                                         : top_singular_value(m, 1e-12);
    Rng rng(seed);
    std::vector<double> y(m.cols());
    for (std::size_t t = 0; t < trials; ++t) {
        for (double& v : y) v = rng.gaussian();
        const double ny = l2_norm(y);
        if (ny == 0.0) continue;
        const double ratio = l2_norm(matvec(m, y)) / ny;
        if (ratio > report.max_ratio) {
            report.max_ratio = ratio;
            report.maximizing_y = y;
        }
    }
    report.holds = report.max_ratio <= report.sigma1 * (1.0 + 1e-9);
    return report;
}

inline StabilityBoundReport verify_stability_bound(const RedistributionMatrix& r,
                                                   std::size_t trials, std::uint64_t seed) {
    return verify_stability_bound(r.matrix, trials, seed);
}

struct ExplanationBin {
    std::size_t lo = 1, hi = 1;  // 1-based singular-value index range, inclusive
    Tensor map;                  // sum of the rank-1 terms in the range
    double norm_fraction = 0.0;  // ||bin map||_2 / ||E(y)||_2
};

struct ExpandedExplanation {
    std::vector<ExplanationBin> bins;
    std::vector<double> cumulative;  // ||sum_{i<=k} E(y; sigma_i)||_2 / ||E(y)||_2
    Tensor full;                     // E(y) = R y
    bool clipped = false;            // a bin edge exceeded K and was clipped
};

// Decomposes E(y) into per-bin partial heat maps E(y; sigma_i) summed over
// each index range, plus the cumulative-norm curve.
inline ExpandedExplanation expand_explanation(const Matrix& m, const std::vector<double>& y,
                                              std::vector<std::pair<std::size_t, std::size_t>> bins) {
    if (y.size() != m.cols()) throw ShapeError("expand_explanation: readout dimension mismatch");
    const std::size_t K = std::min(m.rows(), m.cols());
    for (std::size_t b = 0; b + 1 < bins.size(); ++b)
        if (bins[b].second >= bins[b + 1].first)
            throw InvalidInput("expand_explanation: bin ranges must ascend without overlap");

    ExpandedExplanation out;
    const SvdResult dec = svd(m);

    // rank-1 terms sigma_i u_i (v_i^T y)
    std::vector<std::vector<double>> terms(K);
    for (std::size_t i = 0; i < K; ++i) {
        double vy = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) vy += dec.right_vectors(j, i) * y[j];
        terms[i].resize(m.rows());
        const double scale = dec.singular_values[i] * vy;
        for (std::size_t r = 0; r < m.rows(); ++r)
            terms[i][r] = scale * dec.left_vectors(r, i);
    }

    out.full = Tensor({m.rows()}, matvec(m, y));
    const double full_norm = l2_norm(out.full.values());

    for (auto [lo, hi] : bins) {
        if (lo < 1 || lo > hi) throw InvalidInput("expand_explanation: bad bin range");
        if (lo > K) {
            out.clipped = true;
            continue;
        }
        if (hi > K) {
            out.clipped = true;
            hi = K;
        }
        ExplanationBin bin;
        bin.lo = lo;
        bin.hi = hi;
        bin.map = Tensor({m.rows()});
        for (std::size_t i = lo; i <= hi; ++i)
            for (std::size_t r = 0; r < m.rows(); ++r) bin.map[r] += terms[i - 1][r];
        bin.norm_fraction = full_norm > 0.0 ? l2_norm(bin.map.values()) / full_norm : 0.0;
        out.bins.push_back(std::move(bin));
    }

    out.cumulative.resize(K);
    std::vector<double> acc(m.rows(), 0.0);
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t r = 0; r < m.rows(); ++r) acc[r] += terms[i][r];
        out.cumulative[i] = full_norm > 0.0 ? l2_norm(acc) / full_norm : 0.0;
    }
    return out;
}

inline ExpandedExplanation expand_explanation(const RedistributionMatrix& r, const Readout& y,
                                              std::vector<std::pair<std::size_t, std::size_t>> bins) {
    return expand_explanation(r.matrix, y.y, std::move(bins));
}

// Default singular-value bins for an h-output model: (1,1), (2, ceil(0.4h)),
// (rest). For h = 10 this is (1,1), (2,4), (5,10).
inline std::vector<std::pair<std::size_t, std::size_t>> default_bins(std::size_t K) {
    if (K <= 1) return {{1, 1}};
    const std::size_t mid = std::max<std::size_t>(2, (2 * K + 2) / 5);
    if (mid >= K) return {{1, 1}, {2, K}};
    return {{1, 1}, {2, mid}, {mid + 1, K}};
}

}  // namespace xsa
