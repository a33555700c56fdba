#ifndef PREP_EVAL_HPP
#define PREP_EVAL_HPP

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace prep {

struct ConfusionCounts {
    uint64_t tp = 0;
    uint64_t fp = 0;
    uint64_t fn = 0;
};

struct LabelMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    std::vector<LabelMetrics> per_label;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

namespace detail {

inline double safe_ratio(uint64_t num, uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_from(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

} // namespace detail

// Macro average runs over every label in label_set, including labels that
// never occur; a label with zero-denominator P or R contributes zeros.
inline EvalReport macro_prf(std::span<const std::string> gold, std::span<const std::string> predicted,
                            const std::vector<std::string>& label_set) {
    if (gold.size() != predicted.size())
        throw std::invalid_argument("macro_prf: gold and predicted lengths differ");
    if (label_set.empty()) throw std::invalid_argument("macro_prf: empty label set");

    auto in_set = [&](const std::string& l) {
        return std::find(label_set.begin(), label_set.end(), l) != label_set.end();
    };
    for (size_t i = 0; i < gold.size(); ++i) {
        if (!in_set(gold[i])) throw std::invalid_argument("macro_prf: gold label outside label set: " + gold[i]);
        if (!in_set(predicted[i]))
            throw std::invalid_argument("macro_prf: predicted label outside label set: " + predicted[i]);
    }

    EvalReport report;
    for (const auto& label : label_set) {
        ConfusionCounts c;
        for (size_t i = 0; i < gold.size(); ++i) {
            const bool g = gold[i] == label;
            const bool p = predicted[i] == label;
            if (g && p) ++c.tp;
            else if (!g && p) ++c.fp;
            else if (g && !p) ++c.fn;
        }
        LabelMetrics m;
        m.label = label;
        m.precision = detail::safe_ratio(c.tp, c.tp + c.fp);
        m.recall = detail::safe_ratio(c.tp, c.tp + c.fn);
        m.f1 = detail::f1_from(m.precision, m.recall);
        report.macro_precision += m.precision;
        report.macro_recall += m.recall;
        report.macro_f1 += m.f1;
        report.per_label.push_back(std::move(m));
    }
    const double k = static_cast<double>(label_set.size());
    report.macro_precision /= k;
    report.macro_recall /= k;
    report.macro_f1 /= k;
    return report;
}

// Per-code binary F1 (code present = positive), unweighted mean over codes.
inline double multilabel_macro_f1(const std::vector<std::vector<uint8_t>>& gold,
                                  const std::vector<std::vector<uint8_t>>& pred) {
    if (gold.size() != pred.size()) throw std::invalid_argument("multilabel_macro_f1: row counts differ");
    if (gold.empty()) throw std::invalid_argument("multilabel_macro_f1: empty input");
    const size_t n = gold[0].size();
    for (size_t i = 0; i < gold.size(); ++i)
        if (gold[i].size() != n || pred[i].size() != n)
            throw std::invalid_argument("multilabel_macro_f1: ragged or mismatched shapes");
    if (n == 0) throw std::invalid_argument("multilabel_macro_f1: zero codes");

    double sum_f1 = 0.0;
    for (size_t j = 0; j < n; ++j) {
        ConfusionCounts c;
        for (size_t i = 0; i < gold.size(); ++i) {
            const bool g = gold[i][j] != 0;
            const bool p = pred[i][j] != 0;
            if (g && p) ++c.tp;
            else if (!g && p) ++c.fp;
            else if (g && !p) ++c.fn;
        }
        const double prec = detail::safe_ratio(c.tp, c.tp + c.fp);
        const double rec = detail::safe_ratio(c.tp, c.tp + c.fn);
        sum_f1 += detail::f1_from(prec, rec);
    }
    return sum_f1 / static_cast<double>(n);
}

inline double average_over_diseases(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("average_over_diseases: empty list");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("regularized_incomplete_beta: continued fraction did not converge");
}

} // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("regularized_incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_cf(a, b, x) / a;
    return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

inline double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("student_t_cdf: df must be positive");
    if (t == 0.0) return 0.5;
    const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    return t > 0.0 ? 1.0 - tail : tail;
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    uint64_t df = 0;
};

// Paired two-tailed t-test on differences b - a; sample sd (n-1 denominator).
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    const size_t n = a.size();
    if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");

    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += b[i] - a[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = (b[i] - a[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) throw std::runtime_error("paired_t_test: zero variance in differences");

    TTestResult r;
    r.df = n - 1;
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p = regularized_incomplete_beta(0.5 * static_cast<double>(r.df), 0.5,
                                      static_cast<double>(r.df) / (static_cast<double>(r.df) + r.t * r.t));
    return r;
}

// Aligned text table: one row per task, P/R/F1 columns per system, plus an
// unweighted Average row.
struct SystemScores {
    std::string name;
    std::vector<double> precision;  // one entry per task row
    std::vector<double> recall;
    std::vector<double> f1;
};

inline std::string render_results_table(const std::vector<std::string>& row_names,
                                        const std::vector<SystemScores>& systems) {
    if (systems.empty()) throw std::invalid_argument("render_results_table: no systems");
    for (const auto& s : systems)
        if (s.precision.size() != row_names.size() || s.recall.size() != row_names.size() ||
            s.f1.size() != row_names.size())
            throw std::invalid_argument("render_results_table: system " + s.name + " has wrong row count");

    size_t name_w = std::string("Average").size();
    for (const auto& r : row_names) name_w = std::max(name_w, r.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_w)) << "" << std::right;
    for (const auto& s : systems) out << "  " << std::setw(23) << s.name;
    out << "\n";
    out << std::left << std::setw(static_cast<int>(name_w)) << "" << std::right;
    for (size_t k = 0; k < systems.size(); ++k)
        out << "  " << std::setw(7) << "P" << std::setw(8) << "R" << std::setw(8) << "F1";
    out << "\n";

    out << std::fixed << std::setprecision(3);
    auto row = [&](const std::string& name, auto value) {
        out << std::left << std::setw(static_cast<int>(name_w)) << name << std::right;
        for (const auto& s : systems) {
            auto [p, r, f] = value(s);
            out << "  " << std::setw(7) << p << std::setw(8) << r << std::setw(8) << f;
        }
        out << "\n";
    };
    for (size_t i = 0; i < row_names.size(); ++i)
        row(row_names[i], [&](const SystemScores& s) { return std::tuple{s.precision[i], s.recall[i], s.f1[i]}; });
    row("Average", [&](const SystemScores& s) {
        return std::tuple{average_over_diseases(s.precision), average_over_diseases(s.recall),
                          average_over_diseases(s.f1)};
    });
    return out.str();
}

} // namespace prep

#endif
