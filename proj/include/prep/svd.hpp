#ifndef PREP_SVD_HPP
#define PREP_SVD_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "prep/checkpoint.hpp"
#include "prep/corpus.hpp"
#include "prep/matrix.hpp"
#include "prep/rng.hpp"

namespace prep {

struct SvdFactorization {
    uint32_t k = 0;
    Vector singular_values;  // non-increasing, >= 0
    DenseMatrix V;           // |V| x k, orthonormal columns
};

struct EigenResult {
    Vector values;        // descending
    DenseMatrix vectors;  // columns aligned with values
};

// Cyclic Jacobi eigendecomposition for small symmetric matrices.
inline EigenResult jacobi_eigen_symmetric(DenseMatrix a) {
    if (a.rows != a.cols) throw std::invalid_argument("jacobi_eigen_symmetric: matrix not square");
    const size_t n = a.rows;
    DenseMatrix v = DenseMatrix::identity(n);

    const double scale = frobenius_norm(a);
    const double tol = scale > 0.0 ? 1e-14 * scale : 0.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off) <= tol) break;

        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) <= tol / static_cast<double>(n * n)) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) { return a(i, i) > a(j, j); });

    EigenResult r;
    r.values.resize(n);
    r.vectors = DenseMatrix(n, n);
    for (size_t j = 0; j < n; ++j) {
        r.values[j] = a(order[j], order[j]);
        for (size_t i = 0; i < n; ++i) r.vectors(i, j) = v(i, order[j]);
    }
    return r;
}

namespace detail {

// Two passes of modified Gram-Schmidt over the columns; a column that
// collapses to zero is replaced with the next basis vector that survives
// projection, so the result always has full column rank.
inline void orthonormalize_columns(DenseMatrix& m) {
    const size_t rows = m.rows, cols = m.cols;
    auto project_out = [&](size_t j) {
        for (size_t prev = 0; prev < j; ++prev) {
            double d = 0.0;
            for (size_t i = 0; i < rows; ++i) d += m(i, prev) * m(i, j);
            for (size_t i = 0; i < rows; ++i) m(i, j) -= d * m(i, prev);
        }
    };
    for (size_t j = 0; j < cols; ++j) {
        project_out(j);
        project_out(j);
        double norm = 0.0;
        for (size_t i = 0; i < rows; ++i) norm += m(i, j) * m(i, j);
        norm = std::sqrt(norm);
        if (norm <= 1e-150) {
            for (size_t basis = 0; basis < rows && norm <= 1e-150; ++basis) {
                for (size_t i = 0; i < rows; ++i) m(i, j) = i == basis ? 1.0 : 0.0;
                project_out(j);
                norm = 0.0;
                for (size_t i = 0; i < rows; ++i) norm += m(i, j) * m(i, j);
                norm = std::sqrt(norm);
            }
            if (norm <= 1e-150)
                throw std::runtime_error("orthonormalize_columns: no orthogonal completion exists");
        }
        for (size_t i = 0; i < rows; ++i) m(i, j) /= norm;
    }
}

} // namespace detail

// Randomized subspace iteration with oversampling 10. Power iterations repeat
// (at least two, the classic recipe) until the top-k value estimates stop
// moving at 64-bit resolution, so the factorization tracks the exact one far
// beyond the usual two-pass accuracy.
inline SvdFactorization fit_truncated_svd(const SparseMatrix& m, uint32_t k, uint64_t seed) {
    if (m.rows == 0 || m.cols == 0) throw std::invalid_argument("fit_truncated_svd: empty matrix");
    const size_t min_dim = std::min(m.rows, m.cols);
    if (k < 1 || k > min_dim)
        throw std::invalid_argument("fit_truncated_svd: k=" + std::to_string(k) +
                                    " out of range [1, " + std::to_string(min_dim) + "]");

    const size_t p = std::min<size_t>(k + 10, min_dim);
    Rng rng = Rng(seed).split("svd/omega");

    DenseMatrix omega(m.cols, p);
    for (double& v : omega.values) v = rng.normal();
    DenseMatrix q = spmm(m, omega);  // rows x p
    detail::orthonormalize_columns(q);

    Vector prev_sigma(k, -1.0);
    DenseMatrix bt;  // cols x p, equal to (Q^T A)^T
    EigenResult eig;
    constexpr int kMinIters = 2;
    constexpr int kMaxIters = 1000;
    for (int iter = 0; iter < kMaxIters; ++iter) {
        DenseMatrix z = spmm_transposed(m, q);  // A^T Q
        detail::orthonormalize_columns(z);
        q = spmm(m, z);  // A Z
        detail::orthonormalize_columns(q);

        bt = spmm_transposed(m, q);
        eig = jacobi_eigen_symmetric(gemm(transpose(bt), bt));

        Vector sigma(k);
        for (uint32_t i = 0; i < k; ++i) sigma[i] = std::sqrt(std::max(0.0, eig.values[i]));
        double delta = 0.0;
        for (uint32_t i = 0; i < k; ++i) delta = std::max(delta, std::fabs(sigma[i] - prev_sigma[i]));
        prev_sigma = sigma;
        if (iter + 1 >= kMinIters && delta <= 1e-13 * std::max(sigma[0], 1e-300)) break;
    }

    SvdFactorization fact;
    fact.k = k;
    fact.singular_values = std::move(prev_sigma);
    fact.V = DenseMatrix(m.cols, k);

    const double sigma_tol = 1e-12 * std::max(fact.singular_values[0], 1e-300);
    size_t completion_needed = 0;
    for (uint32_t j = 0; j < k; ++j) {
        const double s = fact.singular_values[j];
        if (s > sigma_tol) {
            for (size_t i = 0; i < m.cols; ++i) {
                double acc = 0.0;
                for (size_t l = 0; l < p; ++l) acc += bt(i, l) * eig.vectors(l, j);
                fact.V(i, j) = acc / s;
            }
        } else {
            ++completion_needed;
        }
    }
    if (completion_needed > 0) detail::orthonormalize_columns(fact.V);

    // Deterministic sign: the largest-magnitude entry of each column is
    // positive (earliest index wins ties).
    for (uint32_t j = 0; j < k; ++j) {
        size_t arg = 0;
        double best = -1.0;
        for (size_t i = 0; i < m.cols; ++i) {
            const double mag = std::fabs(fact.V(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (fact.V(arg, j) < 0.0)
            for (size_t i = 0; i < m.cols; ++i) fact.V(i, j) = -fact.V(i, j);
    }
    return fact;
}

// Plain right-factor projection x V, no singular-value rescaling.
inline Vector project(const SvdFactorization& fact, std::span<const double> x) {
    if (x.size() != fact.V.rows)
        throw std::invalid_argument("project: vector length " + std::to_string(x.size()) +
                                    " does not match fitted dimension " + std::to_string(fact.V.rows));
    Vector out(fact.k, 0.0);
    for (size_t i = 0; i < fact.V.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* vrow = fact.V.row(i);
        for (uint32_t j = 0; j < fact.k; ++j) out[j] += xi * vrow[j];
    }
    return out;
}

inline DenseMatrix project_rows(const SvdFactorization& fact, const SparseMatrix& x) {
    if (x.cols != fact.V.rows)
        throw std::invalid_argument("project_rows: matrix has " + std::to_string(x.cols) +
                                    " columns, fitted dimension is " + std::to_string(fact.V.rows));
    return spmm(x, fact.V);
}

// Patient-CUI feature matrix over the given patients: raw token counts, or
// 0/1 presence when binary is set.
inline SparseMatrix patient_cui_matrix(const EncodedDataset& ds, std::span<const uint32_t> patient_indices,
                                       bool binary) {
    std::vector<std::vector<std::pair<uint32_t, double>>> rows;
    rows.reserve(patient_indices.size());
    for (uint32_t idx : patient_indices) {
        const auto& patient = ds.patients.at(idx);
        std::vector<std::pair<uint32_t, double>> entries;
        entries.reserve(patient.unique_cuis.size());
        for (size_t e = 0; e < patient.unique_cuis.size(); ++e)
            entries.emplace_back(patient.unique_cuis[e],
                                 binary ? 1.0 : static_cast<double>(patient.cui_counts[e]));
        rows.push_back(std::move(entries));
    }
    return SparseMatrix::from_rows(ds.vocab_size, rows);
}

inline Checkpoint to_checkpoint(const SvdFactorization& fact, uint64_t vocab_hash) {
    Checkpoint ckpt;
    ckpt.kind = Checkpoint::Kind::svd;
    ckpt.vocab_hash = vocab_hash;
    ckpt.meta["k"] = std::to_string(fact.k);
    ckpt.meta["vocab_size"] = std::to_string(fact.V.rows);
    ckpt.set_array("singular_values", {fact.singular_values.size()}, fact.singular_values);
    ckpt.set_array("V", {fact.V.rows, fact.V.cols}, fact.V.values);
    return ckpt;
}

inline SvdFactorization svd_from_checkpoint(const Checkpoint& ckpt) {
    ckpt.require_kind(Checkpoint::Kind::svd);
    SvdFactorization fact;
    const auto& sv = ckpt.array("singular_values");
    const auto& v = ckpt.array("V");
    if (v.shape.size() != 2) throw std::runtime_error("svd checkpoint: V must be 2-D");
    fact.k = static_cast<uint32_t>(sv.values.size());
    fact.singular_values = sv.values;
    fact.V = DenseMatrix(v.shape[0], v.shape[1]);
    fact.V.values = v.values;
    if (fact.V.cols != fact.k) throw std::runtime_error("svd checkpoint: V width does not match k");
    return fact;
}

} // namespace prep

#endif
