#ifndef PREP_TESTS_SUPPORT_ORACLES_HPP
#define PREP_TESTS_SUPPORT_ORACLES_HPP

// Reference implementations used to cross-check the library. Everything here
// is deliberately naive, built on plain nested vectors, and shares no code
// with the headers under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.empty() || b.empty() || a[0].size() != b.size()) throw std::invalid_argument("oracle::matmul shape");
    Mat c = zeros(a.size(), b[0].size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline Mat transpose(const Mat& a) {
    Mat t = zeros(a.empty() ? 0 : a[0].size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
    return t;
}

inline std::vector<double> matvec(const Mat& a, const std::vector<double>& x) {
    std::vector<double> y(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != x.size()) throw std::invalid_argument("oracle::matvec shape");
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
    }
    return y;
}

inline double frob(const Mat& a) {
    double s = 0.0;
    for (const auto& row : a)
        for (double v : row) s += v * v;
    return std::sqrt(s);
}

// Central finite difference of f with respect to *param.
inline double central_diff(double* param, const std::function<double()>& f, double h = 1e-5) {
    const double orig = *param;
    *param = orig + h;
    const double fp = f();
    *param = orig - h;
    const double fm = f();
    *param = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

// Dense symmetric eigendecomposition by classical Jacobi (largest off-diagonal
// pivot), intentionally a different strategy from the library's cyclic sweeps.
struct EigenOracle {
    std::vector<double> values;  // descending
    Mat vectors;                 // columns aligned with values
};

inline EigenOracle jacobi_classical(Mat a) {
    const std::size_t n = a.size();
    Mat v = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (std::size_t iter = 0; iter < 100 * n * n + 100; ++iter) {
        std::size_t p = 0, q = 1;
        double biggest = -1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (std::fabs(a[i][j]) > biggest) {
                    biggest = std::fabs(a[i][j]);
                    p = i;
                    q = j;
                }
        if (n < 2 || biggest <= 1e-15 * (1.0 + frob(a))) break;

        const double app = a[p][p], aqq = a[q][q], apq = a[p][q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;

        for (std::size_t i = 0; i < n; ++i) {
            const double aip = a[i][p], aiq = a[i][q];
            a[i][p] = c * aip - s * aiq;
            a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double api = a[p][i], aqi = a[q][i];
            a[p][i] = c * api - s * aqi;
            a[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double vip = v[i][p], viq = v[i][q];
            v[i][p] = c * vip - s * viq;
            v[i][q] = s * vip + c * viq;
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });

    EigenOracle out;
    out.values.resize(n);
    out.vectors = zeros(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a[order[j]][order[j]];
        for (std::size_t i = 0; i < n; ++i) out.vectors[i][j] = v[i][order[j]];
    }
    return out;
}

// Full SVD of a dense matrix through the Gram matrix A^T A. Returns every
// singular value (descending) and the right singular vectors as columns,
// with each column's largest-magnitude entry made positive.
struct SvdOracle {
    std::vector<double> singular_values;
    Mat v;  // cols x cols
};

inline SvdOracle dense_svd(const Mat& a) {
    const Mat gram = matmul(transpose(a), a);
    EigenOracle eig = jacobi_classical(gram);
    SvdOracle out;
    out.singular_values.resize(eig.values.size());
    for (std::size_t i = 0; i < eig.values.size(); ++i)
        out.singular_values[i] = std::sqrt(std::max(0.0, eig.values[i]));
    out.v = eig.vectors;
    for (std::size_t j = 0; j < out.v[0].size(); ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < out.v.size(); ++i)
            if (std::fabs(out.v[i][j]) > best) {
                best = std::fabs(out.v[i][j]);
                arg = i;
            }
        if (out.v[arg][j] < 0.0)
            for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i][j] = -out.v[i][j];
    }
    return out;
}

// Eckart-Young: the best rank-k Frobenius residual is the tail of the spectrum.
inline double optimal_rank_k_residual(const std::vector<double>& singular_values, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = k; i < singular_values.size(); ++i) s += singular_values[i] * singular_values[i];
    return std::sqrt(s);
}

// Brute-force solver for the L1-hinge SVM dual with the bias folded in as a
// constant-1 feature:
//   max_alpha  sum(alpha) - 1/2 alpha^T Q alpha,  0 <= alpha <= C,
//   Q_ij = y_i y_j (x_i . x_j + 1).
// Projected gradient ascent with a conservative fixed step; fine for the
// handful-of-points instances it is used on. Returns the (unique) augmented
// primal weights w_aug = sum_i alpha_i y_i [x_i; 1].
struct QpOracle {
    std::vector<double> alpha;
    std::vector<double> w;  // length = dim(x)
    double bias = 0.0;
};

inline QpOracle svm_dual_qp(const Mat& x, const std::vector<int>& y, double C) {
    const std::size_t n = x.size();
    if (n == 0 || y.size() != n) throw std::invalid_argument("oracle::svm_dual_qp shape");
    const std::size_t d = x[0].size();

    Mat q = zeros(n, n);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dp = 1.0;
            for (std::size_t f = 0; f < d; ++f) dp += x[i][f] * x[j][f];
            q[i][j] = static_cast<double>(y[i]) * static_cast<double>(y[j]) * dp;
            if (i == j) trace += q[i][j];
        }

    std::vector<double> alpha(n, 0.0);
    const double step = 1.0 / trace;
    for (std::size_t iter = 0; iter < 4000000; ++iter) {
        double moved = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double g = 1.0;
            for (std::size_t j = 0; j < n; ++j) g -= q[i][j] * alpha[j];
            double next = std::clamp(alpha[i] + step * g, 0.0, C);
            moved = std::max(moved, std::fabs(next - alpha[i]));
            alpha[i] = next;
        }
        if (moved < 1e-15) break;
    }

    QpOracle out;
    out.alpha = alpha;
    out.w.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double coef = alpha[i] * static_cast<double>(y[i]);
        for (std::size_t f = 0; f < d; ++f) out.w[f] += coef * x[i][f];
        out.bias += coef;
    }
    return out;
}

// Augmented primal objective 1/2 (||w||^2 + b^2) + C sum hinge, matching the
// solver's constant-1-feature convention.
inline double svm_primal(const Mat& x, const std::vector<int>& y, double C, const std::vector<double>& w,
                         double bias) {
    double obj = 0.5 * bias * bias;
    for (double v : w) obj += 0.5 * v * v;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dec = bias;
        for (std::size_t f = 0; f < w.size(); ++f) dec += w[f] * x[i][f];
        obj += C * std::max(0.0, 1.0 - static_cast<double>(y[i]) * dec);
    }
    return obj;
}

// Student-t CDF by composite Simpson integration of the density over [0, |t|].
inline double t_cdf_simpson(double t, double df) {
    if (t < 0.0) return 1.0 - t_cdf_simpson(-t, df);
    const double log_norm =
        std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::acos(-1.0));
    auto pdf = [&](double u) { return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(u * u / df)); };

    const std::size_t intervals = 4000;  // even
    const double h = t / static_cast<double>(intervals);
    if (h == 0.0) return 0.5;
    double acc = pdf(0.0) + pdf(t);
    for (std::size_t i = 1; i < intervals; ++i) acc += pdf(h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
    return 0.5 + acc * h / 3.0;
}

}  // namespace oracle

#endif
