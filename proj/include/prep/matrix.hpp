#ifndef PREP_MATRIX_HPP
#define PREP_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace prep {

using Vector = std::vector<double>;

// Row-major dense matrix of 64-bit floats. All kernels below accumulate in a
// fixed left-to-right order so results are bit-reproducible across runs.
struct DenseMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> values;

    DenseMatrix() = default;
    DenseMatrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(size_t i, size_t j) { return values[i * cols + j]; }
    double operator()(size_t i, size_t j) const { return values[i * cols + j]; }

    double* row(size_t i) { return values.data() + i * cols; }
    const double* row(size_t i) const { return values.data() + i * cols; }

    std::span<double> row_span(size_t i) { return {row(i), cols}; }
    std::span<const double> row_span(size_t i) const { return {row(i), cols}; }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }

    static DenseMatrix identity(size_t n) {
        DenseMatrix m(n, n);
        for (size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("gemm: dimension mismatch " + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                                    std::to_string(b.cols));
    DenseMatrix c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        double* crow = c.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double v : a.values) s += v * v;
    return std::sqrt(s);
}

// Compressed-row sparse matrix. Column indices are strictly increasing within
// each row; duplicate entries are merged at construction.
struct SparseMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<size_t> row_ptr;     // rows + 1 entries
    std::vector<uint32_t> col_idx;
    std::vector<double> values;

    SparseMatrix() = default;

    size_t nnz() const { return values.size(); }

    static SparseMatrix from_triplets(size_t rows, size_t cols,
                                      std::vector<std::tuple<size_t, uint32_t, double>> entries) {
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        SparseMatrix m;
        m.rows = rows;
        m.cols = cols;
        m.row_ptr.assign(rows + 1, 0);
        for (size_t e = 0; e < entries.size();) {
            const auto [r, c, v] = entries[e];
            if (r >= rows || c >= cols)
                throw std::invalid_argument("SparseMatrix::from_triplets: index out of range");
            double sum = v;
            size_t e2 = e + 1;
            while (e2 < entries.size() && std::get<0>(entries[e2]) == r && std::get<1>(entries[e2]) == c) {
                sum += std::get<2>(entries[e2]);
                ++e2;
            }
            m.col_idx.push_back(c);
            m.values.push_back(sum);
            m.row_ptr[r + 1] = m.col_idx.size();
            e = e2;
        }
        for (size_t r = 1; r <= rows; ++r) row_ptr_fix(m.row_ptr, r);
        return m;
    }

    // rows given as (column, value) lists; each list is sorted and merged.
    static SparseMatrix from_rows(size_t cols,
                                  const std::vector<std::vector<std::pair<uint32_t, double>>>& row_entries) {
        std::vector<std::tuple<size_t, uint32_t, double>> trip;
        for (size_t r = 0; r < row_entries.size(); ++r)
            for (const auto& [c, v] : row_entries[r]) trip.emplace_back(r, c, v);
        return from_triplets(row_entries.size(), cols, std::move(trip));
    }

    static SparseMatrix from_dense(const DenseMatrix& d) {
        std::vector<std::tuple<size_t, uint32_t, double>> trip;
        for (size_t i = 0; i < d.rows; ++i)
            for (size_t j = 0; j < d.cols; ++j)
                if (d(i, j) != 0.0) trip.emplace_back(i, static_cast<uint32_t>(j), d(i, j));
        return from_triplets(d.rows, d.cols, std::move(trip));
    }

    DenseMatrix to_dense() const {
        DenseMatrix d(rows, cols);
        for (size_t r = 0; r < rows; ++r)
            for (size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) d(r, col_idx[e]) = values[e];
        return d;
    }

    void validate() const {
        if (row_ptr.size() != rows + 1) throw std::logic_error("SparseMatrix: bad row_ptr length");
        if (row_ptr.front() != 0 || row_ptr.back() != values.size())
            throw std::logic_error("SparseMatrix: bad row_ptr bounds");
        for (size_t r = 0; r < rows; ++r) {
            if (row_ptr[r] > row_ptr[r + 1]) throw std::logic_error("SparseMatrix: decreasing row_ptr");
            for (size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
                if (col_idx[e] >= cols) throw std::logic_error("SparseMatrix: column index out of range");
                if (e > row_ptr[r] && col_idx[e] <= col_idx[e - 1])
                    throw std::logic_error("SparseMatrix: column indices not strictly increasing");
            }
        }
    }

private:
    static void row_ptr_fix(std::vector<size_t>& ptr, size_t r) {
        if (ptr[r] < ptr[r - 1]) ptr[r] = ptr[r - 1];
    }
};

inline Vector spmv(const SparseMatrix& m, const Vector& x) {
    if (x.size() != m.cols)
        throw std::invalid_argument("spmv: dimension mismatch, matrix has " + std::to_string(m.cols) +
                                    " cols, vector has " + std::to_string(x.size()));
    Vector y(m.rows, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (size_t e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) s += m.values[e] * x[m.col_idx[e]];
        y[r] = s;
    }
    return y;
}

// a (m x n) * b (n x l), a sparse.
inline DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("spmm: dimension mismatch");
    DenseMatrix c(a.rows, b.cols);
    for (size_t r = 0; r < a.rows; ++r) {
        double* crow = c.row(r);
        for (size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
            const double v = a.values[e];
            const double* brow = b.row(a.col_idx[e]);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
        }
    }
    return c;
}

// a^T (n x m) * b (m x l), a sparse m x n.
inline DenseMatrix spmm_transposed(const SparseMatrix& a, const DenseMatrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("spmm_transposed: dimension mismatch");
    DenseMatrix c(a.cols, b.cols);
    for (size_t r = 0; r < a.rows; ++r) {
        const double* brow = b.row(r);
        for (size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
            const double v = a.values[e];
            double* crow = c.row(a.col_idx[e]);
            for (size_t j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
        }
    }
    return c;
}

} // namespace prep

#endif
