// Dense matrix kernels: one-sided Jacobi SVD, Gram-operator power iteration,
// Frobenius and L1 operator norms. Everything is 64-bit and single-threaded
// pure; callers may parallelize across matrices.
#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/rng.hpp"
#include "xsa/tensor.hpp"

namespace xsa {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("matrix data length does not match rows*cols");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    std::vector<double> column(std::size_t j) const {
        std::vector<double> c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }

    void set_column(std::size_t j, const std::vector<double>& c) {
        for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
    if (x.size() != m.cols()) throw ShapeError("matvec: dimension mismatch");
    std::vector<double> y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

inline std::vector<double> matvec_transposed(const Matrix& m, const std::vector<double>& x) {
    if (x.size() != m.rows()) throw ShapeError("matvec_transposed: dimension mismatch");
    std::vector<double> y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.row_ptr(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += row[j] * xi;
    }
    return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            double* crow = c.row_ptr(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    return c;
}

inline double frobenius_norm(const Matrix& m) {
    if (!m.all_finite()) throw InvalidInput("frobenius_norm: non-finite entry");
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return std::sqrt(s);
}

// max over columns of the column absolute sums
inline double l1_operator_norm(const Matrix& m) {
    if (!m.all_finite()) throw InvalidInput("l1_operator_norm: non-finite entry");
    std::vector<double> colsum(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols(); ++j) colsum[j] += std::abs(row[j]);
    }
    double best = 0.0;
    for (double v : colsum) best = std::max(best, v);
    return best;
}

struct SvdResult {
    std::vector<double> singular_values;  // descending, length K = min(d,h)
    Matrix left_vectors;                  // d x K
    Matrix right_vectors;                 // h x K
};

namespace detail {

// Orthogonalizes the columns of `a` (m x n, m >= n) in place by Jacobi plane
// rotations, accumulating them into `v` (n x n). On return the columns of `a`
// are sigma_j * u_j and v holds the right singular vectors.
inline void one_sided_jacobi(Matrix& a, Matrix& v) {
    const std::size_t m = a.rows(), n = a.cols();
    v = Matrix::identity(n);
    if (n == 1) return;
    const double tol = 1e-15;
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double* row = a.row_ptr(i);
                    app += row[p] * row[p];
                    aqq += row[q] * row[q];
                    apq += row[p] * row[q];
                }
                if (apq == 0.0 || std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0)
                                     ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                     : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    double* row = a.row_ptr(i);
                    const double xp = row[p], xq = row[q];
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double* row = v.row_ptr(i);
                    const double xp = row[p], xq = row[q];
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
            }
        }
        if (!rotated) return;
    }
    throw ConvergenceFailure("one-sided Jacobi SVD did not converge", 0.0, max_sweeps);
}

// Fills zero-norm left-vector columns with unit vectors orthonormal to all
// previously fixed columns (rank-deficient input).
inline void complete_orthonormal(Matrix& u, const std::vector<bool>& fixed) {
    const std::size_t m = u.rows(), k = u.cols();
    for (std::size_t j = 0; j < k; ++j) {
        if (fixed[j]) continue;
        std::vector<double> cand(m, 0.0);
        bool ok = false;
        for (std::size_t basis = 0; basis < m && !ok; ++basis) {
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[basis] = 1.0;
            // two Gram-Schmidt passes for numerical orthogonality
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t jj = 0; jj < k; ++jj) {
                    if (jj == j || (!fixed[jj] && jj > j)) continue;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += cand[i] * u(i, jj);
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, jj);
                }
            }
            double norm = l2_norm(cand);
            if (norm > 0.5) {
                for (double& x : cand) x /= norm;
                ok = true;
            }
        }
        if (!ok) throw Error("svd: failed to complete orthonormal basis");
        u.set_column(j, cand);
    }
}

}  // namespace detail

// Full SVD M = sum_i sigma_i u_i v_i^T with K = min(d, h) triples.
// Jacobi rotations run on the thinner dimension.
inline SvdResult svd(const Matrix& input) {
    if (input.rows() == 0 || input.cols() == 0) throw InvalidInput("svd: empty matrix");
    if (!input.all_finite()) throw InvalidInput("svd: non-finite entry");

    const bool transposed = input.rows() < input.cols();
    Matrix a = transposed ? input.transposed() : input;
    const std::size_t m = a.rows(), n = a.cols();

    Matrix v;
    detail::one_sided_jacobi(a, v);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(s);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double sigma_max = sigma.empty() ? 0.0 : sigma[order[0]];
    const double rank_tol = sigma_max * 1e-13;

    Matrix u(m, n), vr(n, n);
    std::vector<double> sorted_sigma(n);
    std::vector<bool> fixed(n, false);
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t src = order[jj];
        sorted_sigma[jj] = sigma[src];
        for (std::size_t i = 0; i < n; ++i) vr(i, jj) = v(i, src);
        if (sigma[src] > rank_tol && sigma[src] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) u(i, jj) = a(i, src) / sigma[src];
            fixed[jj] = true;
        } else {
            sorted_sigma[jj] = 0.0;
        }
    }
    detail::complete_orthonormal(u, fixed);

    SvdResult result;
    result.singular_values = std::move(sorted_sigma);
    if (transposed) {
        result.left_vectors = std::move(vr);
        result.right_vectors = std::move(u);
    } else {
        result.left_vectors = std::move(u);
        result.right_vectors = std::move(vr);
    }
    return result;
}

// Largest singular value via power iteration on the Gram operator, iterating
// in the thinner dimension. Converges to |sigma1_hat - sigma1| <= tol*sigma1;
// a geometric-rate estimate of the remaining error decides termination, so a
// tiny spectral gap ends in ConvergenceFailure rather than a silently low value.
inline double top_singular_value(const Matrix& m, double tol = 1e-12, int max_iters = 100000) {
    if (tol <= 0.0) throw InvalidInput("top_singular_value: tol must be positive");
    if (m.rows() == 0 || m.cols() == 0) throw InvalidInput("top_singular_value: empty matrix");
    if (!m.all_finite()) throw InvalidInput("top_singular_value: non-finite entry");

    double fro2 = 0.0;
    for (double v : m.values()) fro2 += v * v;
    if (fro2 == 0.0) return 0.0;

    const bool tall = m.rows() >= m.cols();
    const std::size_t n = tall ? m.cols() : m.rows();

    // Gram operator x -> M^T M x (or M M^T x when the matrix is wide).
    const auto apply = [&](const std::vector<double>& x) {
        return tall ? matvec_transposed(m, matvec(m, x))
                    : matvec(m, matvec_transposed(m, x));
    };

    Rng rng(0x5eed5eedULL);
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    double norm = l2_norm(v);
    for (double& x : v) x /= norm;

    double rho_prev = 0.0, diff_prev = 0.0;
    for (int iter = 1; iter <= max_iters; ++iter) {
        std::vector<double> gv = apply(v);
        double rho = dot(v, gv);  // Rayleigh quotient, converges to sigma1^2 from below
        double gv_norm = l2_norm(gv);
        if (gv_norm == 0.0) {
            // iterate landed in the null space; restart from a basis vector
            std::fill(v.begin(), v.end(), 0.0);
            v[static_cast<std::size_t>(iter - 1) % n] = 1.0;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = gv[i] / gv_norm;

        const double diff = rho - rho_prev;
        if (iter > 1) {
            if (diff <= 4.0 * DBL_EPSILON * rho) return std::sqrt(std::max(rho, 0.0));
            if (diff_prev > 0.0) {
                double rate = diff / diff_prev;
                rate = std::min(std::max(rate, 0.0), 0.99999);
                const double remaining = diff * rate / (1.0 - rate);
                // tolerance on rho: (1+tol)^2 ~ 1 + 2 tol
                if (remaining <= tol * rho) return std::sqrt(std::max(rho, 0.0));
            }
        }
        rho_prev = rho;
        diff_prev = diff;
    }
    throw ConvergenceFailure("power iteration did not reach tolerance",
                             std::sqrt(std::max(rho_prev, 0.0)), max_iters);
}

}  // namespace xsa
