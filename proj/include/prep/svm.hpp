#ifndef PREP_SVM_HPP
#define PREP_SVM_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "prep/checkpoint.hpp"
#include "prep/matrix.hpp"
#include "prep/rng.hpp"

namespace prep {

struct SvmConfig {
    double C = 1.0;
    double tolerance = 1e-4;  // on the maximal projected-gradient violation
    uint32_t max_sweeps = 1000;
    uint64_t seed = 0;

    void validate() const {
        if (!(C > 0.0)) throw std::invalid_argument("SvmConfig: C must be positive");
        if (!(tolerance > 0.0)) throw std::invalid_argument("SvmConfig: tolerance must be positive");
        if (max_sweeps < 1) throw std::invalid_argument("SvmConfig: max_sweeps must be >= 1");
    }
};

// Row-wise feature view shared by the sparse bag-of-CUIs arm and the dense
// representation arms.
struct SvmProblem {
    size_t num_features = 0;
    std::vector<std::vector<std::pair<uint32_t, double>>> rows;

    static SvmProblem from_sparse(const SparseMatrix& m) {
        SvmProblem p;
        p.num_features = m.cols;
        p.rows.resize(m.rows);
        for (size_t r = 0; r < m.rows; ++r)
            for (size_t e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e)
                p.rows[r].emplace_back(static_cast<uint32_t>(m.col_idx[e]), m.values[e]);
        return p;
    }

    static SvmProblem from_dense(const DenseMatrix& m) {
        SvmProblem p;
        p.num_features = m.cols;
        p.rows.resize(m.rows);
        for (size_t r = 0; r < m.rows; ++r) {
            p.rows[r].reserve(m.cols);
            for (size_t c = 0; c < m.cols; ++c)
                if (m(r, c) != 0.0) p.rows[r].emplace_back(static_cast<uint32_t>(c), m(r, c));
        }
        return p;
    }
};

struct BinarySvm {
    Vector w;
    double bias = 0.0;
    bool degenerate = false;  // single-class input, constant decision
    std::vector<double> dual_objective_per_sweep;

    double decision(std::span<const std::pair<uint32_t, double>> x) const {
        double d = bias;
        for (const auto& [idx, val] : x) {
            if (idx >= w.size()) throw std::out_of_range("BinarySvm::decision: feature index out of range");
            d += w[idx] * val;
        }
        return d;
    }
};

// Dual coordinate descent for L2-regularized L1-hinge SVM:
//   min_w 1/2 ||w||^2 + C sum_i max(0, 1 - y_i (w.x_i + b))
// The bias rides along as a constant-1 feature. Every coordinate update
// solves its box-constrained subproblem exactly, so the dual objective
// sum(alpha) - 1/2 ||w_aug||^2 never decreases; one value per sweep is kept
// for that contract. Stops when the largest projected-gradient violation of
// a sweep drops below tolerance.
inline BinarySvm train_binary(const SvmProblem& problem, std::span<const int8_t> labels,
                              const SvmConfig& cfg, Rng rng) {
    cfg.validate();
    const size_t n = problem.rows.size();
    if (n == 0) throw std::invalid_argument("train_binary: empty dataset");
    if (labels.size() != n) throw std::invalid_argument("train_binary: label count mismatch");
    for (int8_t y : labels)
        if (y != 1 && y != -1) throw std::invalid_argument("train_binary: labels must be +1 or -1");

    BinarySvm model;
    model.w.assign(problem.num_features, 0.0);

    bool has_pos = false, has_neg = false;
    for (int8_t y : labels) (y == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        model.degenerate = true;
        model.bias = has_pos ? 1.0 : -1.0;
        return model;
    }

    const size_t aug = problem.num_features;  // bias slot
    Vector w_aug(problem.num_features + 1, 0.0);
    Vector alpha(n, 0.0);
    Vector q_diag(n);
    for (size_t i = 0; i < n; ++i) {
        double q = 1.0;  // constant-1 bias feature
        for (const auto& [idx, val] : problem.rows[i]) {
            if (idx >= problem.num_features)
                throw std::out_of_range("train_binary: feature index out of range");
            q += val * val;
        }
        q_diag[i] = q;
    }

    std::vector<uint32_t> order(n);
    for (uint32_t i = 0; i < n; ++i) order[i] = i;

    for (uint32_t sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        rng.shuffle(order);
        double max_violation = 0.0;
        for (uint32_t i : order) {
            const double yi = labels[i];
            double wx = w_aug[aug];
            for (const auto& [idx, val] : problem.rows[i]) wx += w_aug[idx] * val;
            const double grad = yi * wx - 1.0;

            double pg = grad;
            if (alpha[i] <= 0.0 && grad >= 0.0) pg = 0.0;
            else if (alpha[i] >= cfg.C && grad <= 0.0) pg = 0.0;
            max_violation = std::max(max_violation, std::fabs(pg));
            if (pg == 0.0) continue;

            const double old = alpha[i];
            alpha[i] = std::min(std::max(old - grad / q_diag[i], 0.0), cfg.C);
            const double delta = (alpha[i] - old) * yi;
            if (delta != 0.0) {
                w_aug[aug] += delta;
                for (const auto& [idx, val] : problem.rows[i]) w_aug[idx] += delta * val;
            }
        }

        double alpha_sum = 0.0;
        for (double a : alpha) alpha_sum += a;
        double norm_sq = 0.0;
        for (double w : w_aug) norm_sq += w * w;
        model.dual_objective_per_sweep.push_back(alpha_sum - 0.5 * norm_sq);

        if (max_violation < cfg.tolerance) break;
    }

    model.w.assign(w_aug.begin(), w_aug.begin() + static_cast<std::ptrdiff_t>(problem.num_features));
    model.bias = w_aug[aug];
    return model;
}

struct OneVsAllModel {
    std::vector<std::string> class_labels;
    DenseMatrix weights;           // num_classes x num_features
    Vector biases;                 // num_classes
    std::vector<uint8_t> degenerate;
    std::vector<uint8_t> absent;   // class had no positive example: never wins argmax

    size_t num_classes() const { return class_labels.size(); }
    size_t num_features() const { return weights.cols; }
};

// One binary model per class (that class vs rest). Classes listed in
// label_set but unseen in the data are kept with minus-infinity decisions.
// Per-class solves run on independent seeded substreams, so thread fan-out
// cannot change results.
inline OneVsAllModel train_one_vs_all(const SvmProblem& problem, std::span<const std::string> labels,
                                      const SvmConfig& cfg, std::vector<std::string> label_set = {},
                                      uint32_t threads = 1) {
    cfg.validate();
    if (problem.rows.empty()) throw std::invalid_argument("train_one_vs_all: empty dataset");
    if (labels.size() != problem.rows.size())
        throw std::invalid_argument("train_one_vs_all: label count mismatch");
    if (threads < 1) throw std::invalid_argument("train_one_vs_all: threads must be >= 1");

    if (label_set.empty()) {
        label_set.assign(labels.begin(), labels.end());
        std::sort(label_set.begin(), label_set.end());
        label_set.erase(std::unique(label_set.begin(), label_set.end()), label_set.end());
    } else {
        for (const auto& l : labels)
            if (std::find(label_set.begin(), label_set.end(), l) == label_set.end())
                throw std::invalid_argument("train_one_vs_all: label outside label set: " + l);
    }

    OneVsAllModel model;
    model.class_labels = label_set;
    model.weights = DenseMatrix(label_set.size(), problem.num_features);
    model.biases.assign(label_set.size(), 0.0);
    model.degenerate.assign(label_set.size(), 0);
    model.absent.assign(label_set.size(), 0);

    const Rng root(cfg.seed);
    auto solve_class = [&](size_t c) {
        const std::string& cls = model.class_labels[c];
        std::vector<int8_t> y(labels.size());
        bool any_pos = false;
        for (size_t i = 0; i < labels.size(); ++i) {
            y[i] = labels[i] == cls ? 1 : -1;
            any_pos |= y[i] == 1;
        }
        if (!any_pos) {
            model.absent[c] = 1;
            model.degenerate[c] = 1;
            return;
        }
        BinarySvm bin = train_binary(problem, y, cfg, root.split("svm/class/" + cls));
        std::copy(bin.w.begin(), bin.w.end(), model.weights.row(c));
        model.biases[c] = bin.bias;
        model.degenerate[c] = bin.degenerate ? 1 : 0;
    };

    if (threads <= 1 || label_set.size() <= 1) {
        for (size_t c = 0; c < label_set.size(); ++c) solve_class(c);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        const uint32_t workers = std::min<uint32_t>(threads, static_cast<uint32_t>(label_set.size()));
        for (uint32_t t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (size_t c = next.fetch_add(1); c < label_set.size(); c = next.fetch_add(1))
                    solve_class(c);
            });
        for (auto& th : pool) th.join();
    }
    return model;
}

inline Vector decision_values(const OneVsAllModel& model, std::span<const std::pair<uint32_t, double>> x) {
    Vector scores(model.num_classes());
    for (size_t c = 0; c < model.num_classes(); ++c) {
        if (model.absent[c]) {
            scores[c] = -std::numeric_limits<double>::infinity();
            continue;
        }
        double d = model.biases[c];
        const double* w = model.weights.row(c);
        for (const auto& [idx, val] : x) {
            if (idx >= model.num_features())
                throw std::out_of_range("decision_values: feature index out of range");
            d += w[idx] * val;
        }
        scores[c] = d;
    }
    return scores;
}

// Argmax of per-class decisions; ties go to the lowest class index.
inline size_t predict_class(const OneVsAllModel& model, std::span<const std::pair<uint32_t, double>> x) {
    const Vector scores = decision_values(model, x);
    size_t best = 0;
    for (size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = c;
    return best;
}

inline const std::string& predict_label(const OneVsAllModel& model,
                                        std::span<const std::pair<uint32_t, double>> x) {
    return model.class_labels[predict_class(model, x)];
}

inline Checkpoint to_checkpoint(const OneVsAllModel& model, uint64_t vocab_hash,
                                const std::string& feature_space) {
    Checkpoint ckpt;
    ckpt.kind = Checkpoint::Kind::svm;
    ckpt.vocab_hash = vocab_hash;
    ckpt.meta["feature_space"] = feature_space;
    ckpt.meta["num_classes"] = std::to_string(model.num_classes());
    ckpt.meta["num_features"] = std::to_string(model.num_features());
    std::string joined;
    for (const auto& l : model.class_labels) {
        if (!joined.empty()) joined += "\n";
        joined += l;
    }
    ckpt.meta["classes"] = joined;
    ckpt.set_array("W", {model.weights.rows, model.weights.cols}, model.weights.values);
    ckpt.set_array("bias", {model.biases.size()}, model.biases);
    Vector flags(model.num_classes() * 2);
    for (size_t c = 0; c < model.num_classes(); ++c) {
        flags[c] = model.degenerate[c];
        flags[model.num_classes() + c] = model.absent[c];
    }
    ckpt.set_array("flags", {2, model.num_classes()}, flags);
    return ckpt;
}

inline OneVsAllModel svm_from_checkpoint(const Checkpoint& ckpt) {
    ckpt.require_kind(Checkpoint::Kind::svm);
    OneVsAllModel model;
    std::string joined = ckpt.meta.at("classes");
    size_t start = 0;
    while (start <= joined.size() && !joined.empty()) {
        size_t end = joined.find('\n', start);
        if (end == std::string::npos) {
            model.class_labels.push_back(joined.substr(start));
            break;
        }
        model.class_labels.push_back(joined.substr(start, end - start));
        start = end + 1;
    }
    const auto& w = ckpt.array("W");
    if (w.shape.size() != 2 || w.shape[0] != model.class_labels.size())
        throw std::runtime_error("svm checkpoint: weight shape does not match class list");
    model.weights = DenseMatrix(w.shape[0], w.shape[1]);
    model.weights.values = w.values;
    model.biases = ckpt.array("bias").values;
    const auto& flags = ckpt.array("flags");
    model.degenerate.resize(model.class_labels.size());
    model.absent.resize(model.class_labels.size());
    for (size_t c = 0; c < model.class_labels.size(); ++c) {
        model.degenerate[c] = flags.values[c] != 0.0;
        model.absent[c] = flags.values[model.class_labels.size() + c] != 0.0;
    }
    return model;
}

} // namespace prep

#endif
