#ifndef PREP_DAN_HPP
#define PREP_DAN_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prep/checkpoint.hpp"
#include "prep/corpus.hpp"
#include "prep/eval.hpp"
#include "prep/matrix.hpp"
#include "prep/rng.hpp"

namespace prep {

enum class Activation : uint8_t { rectifier, tanh };

inline const char* to_string(Activation a) { return a == Activation::rectifier ? "rectifier" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "rectifier") return Activation::rectifier;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation: \"" + s + "\" (expected rectifier or tanh)");
}

struct DanConfig {
    uint32_t embed_dim = 300;
    uint32_t hidden_dim = 1000;
    double learning_rate = 0.001;
    uint32_t epochs = 75;
    uint32_t batch_size = 50;
    double rmsprop_decay = 0.9;
    double rmsprop_epsilon = 1e-8;
    double sigmoid_threshold = 0.5;
    Activation hidden_activation = Activation::rectifier;
    uint64_t seed = 0;

    void validate() const {
        if (embed_dim < 1 || hidden_dim < 1) throw std::invalid_argument("DanConfig: dims must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("DanConfig: batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("DanConfig: learning_rate must be positive");
        if (!(sigmoid_threshold > 0.0 && sigmoid_threshold < 1.0))
            throw std::invalid_argument("DanConfig: sigmoid_threshold must be in (0, 1)");
        if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0))
            throw std::invalid_argument("DanConfig: rmsprop_decay must be in (0, 1)");
        if (!(rmsprop_epsilon > 0.0)) throw std::invalid_argument("DanConfig: rmsprop_epsilon must be positive");
    }
};

// Mean embedding -> hidden layer -> n sigmoid outputs, one per billing code.
// RMSProp caches live beside their parameters.
struct DanModel {
    DenseMatrix E;   // |V| x embed_dim
    DenseMatrix W1;  // embed_dim x hidden_dim
    Vector b1;       // hidden_dim
    DenseMatrix W2;  // hidden_dim x n
    Vector b2;       // n
    Activation activation = Activation::rectifier;

    DenseMatrix cache_E, cache_W1, cache_W2;
    Vector cache_b1, cache_b2;

    uint32_t vocab_size() const { return static_cast<uint32_t>(E.rows); }
    uint32_t embed_dim() const { return static_cast<uint32_t>(E.cols); }
    uint32_t hidden_dim() const { return static_cast<uint32_t>(W1.cols); }
    uint32_t num_codes() const { return static_cast<uint32_t>(W2.cols); }

    // W1/W2 symmetric uniform scaled by 1/sqrt(fan_in); biases zero; E uniform
    // in [-0.5/d, 0.5/d] unless a pretrained matrix is supplied.
    static DanModel init(uint32_t vocab, uint32_t num_codes, const DanConfig& cfg, Rng& rng,
                         const std::optional<DenseMatrix>& pretrained = std::nullopt) {
        DanModel m;
        m.activation = cfg.hidden_activation;
        if (pretrained) {
            if (pretrained->rows != vocab || pretrained->cols != cfg.embed_dim)
                throw std::invalid_argument(
                    "DanModel::init: pretrained embeddings are " + std::to_string(pretrained->rows) + "x" +
                    std::to_string(pretrained->cols) + ", expected " + std::to_string(vocab) + "x" +
                    std::to_string(cfg.embed_dim));
            m.E = *pretrained;
        } else {
            m.E = DenseMatrix(vocab, cfg.embed_dim);
            const double half = 0.5 / static_cast<double>(cfg.embed_dim);
            for (double& v : m.E.values) v = rng.uniform(-half, half);
        }
        m.W1 = DenseMatrix(cfg.embed_dim, cfg.hidden_dim);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
        for (double& v : m.W1.values) v = rng.uniform(-s1, s1);
        m.b1.assign(cfg.hidden_dim, 0.0);
        m.W2 = DenseMatrix(cfg.hidden_dim, num_codes);
        const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
        for (double& v : m.W2.values) v = rng.uniform(-s2, s2);
        m.b2.assign(num_codes, 0.0);

        m.cache_E = DenseMatrix(vocab, cfg.embed_dim);
        m.cache_W1 = DenseMatrix(cfg.embed_dim, cfg.hidden_dim);
        m.cache_b1.assign(cfg.hidden_dim, 0.0);
        m.cache_W2 = DenseMatrix(cfg.hidden_dim, num_codes);
        m.cache_b2.assign(num_codes, 0.0);
        return m;
    }
};

struct DanForward {
    Vector a;  // mean embedding
    Vector h;  // post-activation hidden layer (the patient vector)
    Vector p;  // sigmoid outputs
};

// Set semantics: indices are deduplicated, so order and multiplicity never
// matter. Empty input falls back to a zero mean embedding.
inline DanForward forward(const DanModel& model, std::span<const uint32_t> cuis) {
    const size_t d = model.E.cols, hd = model.W1.cols, n = model.W2.cols;
    std::vector<uint32_t> unique(cuis.begin(), cuis.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

    DanForward f;
    f.a.assign(d, 0.0);
    if (!unique.empty()) {
        for (uint32_t r : unique) {
            if (r >= model.E.rows) throw std::out_of_range("forward: CUI index out of range");
            const double* row = model.E.row(r);
            for (size_t j = 0; j < d; ++j) f.a[j] += row[j];
        }
        const double inv = 1.0 / static_cast<double>(unique.size());
        for (double& v : f.a) v *= inv;
    }

    f.h.assign(hd, 0.0);
    for (size_t e = 0; e < d; ++e) {
        const double ae = f.a[e];
        if (ae == 0.0) continue;
        const double* w = model.W1.row(e);
        for (size_t i = 0; i < hd; ++i) f.h[i] += ae * w[i];
    }
    for (size_t i = 0; i < hd; ++i) {
        const double z = f.h[i] + model.b1[i];
        f.h[i] = model.activation == Activation::rectifier ? (z > 0.0 ? z : 0.0) : std::tanh(z);
    }

    f.p.assign(n, 0.0);
    for (size_t i = 0; i < hd; ++i) {
        const double hi = f.h[i];
        if (hi == 0.0) continue;
        const double* w = model.W2.row(i);
        for (size_t j = 0; j < n; ++j) f.p[j] += hi * w[j];
    }
    for (size_t j = 0; j < n; ++j) f.p[j] = 1.0 / (1.0 + std::exp(-(f.p[j] + model.b2[j])));
    return f;
}

// Mean binary cross entropy over the n outputs, probabilities clamped away
// from 0 and 1 so the loss stays finite.
inline double bce_loss(std::span<const double> p, std::span<const uint8_t> y) {
    if (p.size() != y.size()) throw std::invalid_argument("bce_loss: length mismatch");
    if (p.empty()) throw std::invalid_argument("bce_loss: empty vectors");
    constexpr double kClamp = 1e-12;
    double total = 0.0;
    for (size_t j = 0; j < p.size(); ++j) {
        const double pj = std::min(1.0 - kClamp, std::max(kClamp, p[j]));
        total += y[j] ? -std::log(pj) : -std::log1p(-pj);
    }
    return total / static_cast<double>(p.size());
}

// Mean loss over a batch of dataset patients at current parameters.
inline double batch_loss(const DanModel& model, const EncodedDataset& ds,
                         std::span<const uint32_t> batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    double total = 0.0;
    for (uint32_t idx : batch) {
        const auto& patient = ds.patients.at(idx);
        const DanForward f = forward(model, patient.unique_cuis);
        total += bce_loss(f.p, patient.targets);
    }
    return total / static_cast<double>(batch.size());
}

struct DanGradients {
    std::map<uint32_t, Vector> E_rows;  // touched embedding rows only
    DenseMatrix W1;
    Vector b1;
    DenseMatrix W2;
    Vector b2;
};

// Gradients of the mean batch loss (mean over batch and over outputs). Each
// patient's embedding rows receive the input gradient scaled by one over its
// unique-CUI count.
inline DanGradients backward(const DanModel& model, const EncodedDataset& ds,
                             std::span<const uint32_t> batch) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    const size_t d = model.E.cols, hd = model.W1.cols, n = model.W2.cols;

    DanGradients g;
    g.W1 = DenseMatrix(d, hd);
    g.b1.assign(hd, 0.0);
    g.W2 = DenseMatrix(hd, n);
    g.b2.assign(n, 0.0);

    const double scale = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(n));
    Vector dz2(n), dh(hd), dz1(hd), da(d);

    for (uint32_t idx : batch) {
        const auto& patient = ds.patients.at(idx);
        const DanForward f = forward(model, patient.unique_cuis);

        for (size_t j = 0; j < n; ++j) dz2[j] = (f.p[j] - static_cast<double>(patient.targets[j])) * scale;

        for (size_t j = 0; j < n; ++j) g.b2[j] += dz2[j];
        for (size_t i = 0; i < hd; ++i) {
            const double hi = f.h[i];
            double* w2g = g.W2.row(i);
            const double* w2 = model.W2.row(i);
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) {
                w2g[j] += hi * dz2[j];
                acc += w2[j] * dz2[j];
            }
            dh[i] = acc;
        }

        for (size_t i = 0; i < hd; ++i) {
            const double deriv = model.activation == Activation::rectifier ? (f.h[i] > 0.0 ? 1.0 : 0.0)
                                                                           : 1.0 - f.h[i] * f.h[i];
            dz1[i] = dh[i] * deriv;
        }

        for (size_t i = 0; i < hd; ++i) g.b1[i] += dz1[i];
        for (size_t e = 0; e < d; ++e) {
            const double ae = f.a[e];
            double* w1g = g.W1.row(e);
            const double* w1 = model.W1.row(e);
            double acc = 0.0;
            for (size_t i = 0; i < hd; ++i) {
                w1g[i] += ae * dz1[i];
                acc += w1[i] * dz1[i];
            }
            da[e] = acc;
        }

        if (!patient.unique_cuis.empty()) {
            const double inv = 1.0 / static_cast<double>(patient.unique_cuis.size());
            for (uint32_t r : patient.unique_cuis) {
                auto [it, inserted] = g.E_rows.try_emplace(r, Vector(d, 0.0));
                Vector& row = it->second;
                for (size_t e = 0; e < d; ++e) row[e] += da[e] * inv;
            }
        }
    }
    return g;
}

namespace detail {

inline void rmsprop_apply(std::span<double> theta, std::span<double> cache, std::span<const double> grad,
                          double lr, double rho, double eps) {
    for (size_t i = 0; i < theta.size(); ++i) {
        cache[i] = rho * cache[i] + (1.0 - rho) * grad[i] * grad[i];
        theta[i] -= lr * grad[i] / (std::sqrt(cache[i]) + eps);
    }
}

} // namespace detail

// cache <- rho*cache + (1-rho)*g^2; theta <- theta - lr*g/(sqrt(cache)+eps).
// Dense caches decay even under zero gradient; embedding rows outside the
// gradient are left alone entirely.
inline void rmsprop_step(DanModel& model, const DanGradients& g, const DanConfig& cfg) {
    const double lr = cfg.learning_rate, rho = cfg.rmsprop_decay, eps = cfg.rmsprop_epsilon;
    detail::rmsprop_apply(model.W1.values, model.cache_W1.values, g.W1.values, lr, rho, eps);
    detail::rmsprop_apply(model.b1, model.cache_b1, g.b1, lr, rho, eps);
    detail::rmsprop_apply(model.W2.values, model.cache_W2.values, g.W2.values, lr, rho, eps);
    detail::rmsprop_apply(model.b2, model.cache_b2, g.b2, lr, rho, eps);
    for (const auto& [row, grad] : g.E_rows)
        detail::rmsprop_apply(model.E.row_span(row), model.cache_E.row_span(row), grad, lr, rho, eps);
}

inline std::vector<uint8_t> predict_codes(const DanModel& model, std::span<const uint32_t> cuis,
                                          double threshold) {
    const DanForward f = forward(model, cuis);
    std::vector<uint8_t> out(f.p.size());
    for (size_t j = 0; j < f.p.size(); ++j) out[j] = f.p[j] >= threshold ? 1 : 0;
    return out;
}

inline Vector harvest(const DanModel& model, std::span<const uint32_t> cuis) {
    return forward(model, cuis).h;
}

// Validation macro-F1 over codes with thresholded predictions.
inline double validation_macro_f1(const DanModel& model, const EncodedDataset& ds,
                                  std::span<const uint32_t> val_indices, double threshold) {
    if (val_indices.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<uint8_t>> gold, pred;
    gold.reserve(val_indices.size());
    pred.reserve(val_indices.size());
    for (uint32_t idx : val_indices) {
        const auto& patient = ds.patients.at(idx);
        gold.emplace_back(patient.targets.begin(), patient.targets.end());
        pred.push_back(predict_codes(model, patient.unique_cuis, threshold));
    }
    return multilabel_macro_f1(gold, pred);
}

struct EpochLog {
    uint32_t epoch = 0;
    double mean_train_loss = 0.0;
    double val_macro_f1 = std::numeric_limits<double>::quiet_NaN();
};

struct DanTrainResult {
    DanModel model;
    std::vector<EpochLog> log;
};

// Mini-batch RMSProp training; retrain_on_all folds the validation split into
// training (the log then carries NaN validation scores).
inline DanTrainResult train_dan(const EncodedDataset& ds, const DanConfig& cfg,
                                const std::optional<DenseMatrix>& pretrained = std::nullopt,
                                bool retrain_on_all = false) {
    cfg.validate();
    const Rng root(cfg.seed);
    Rng init_rng = root.split("dan/init");
    Rng shuffle_rng = root.split("dan/shuffle");

    std::vector<uint32_t> train_idx = ds.split_indices(Split::train);
    std::vector<uint32_t> val_idx = ds.split_indices(Split::validation);
    if (retrain_on_all) {
        train_idx.insert(train_idx.end(), val_idx.begin(), val_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        val_idx.clear();
    }
    if (train_idx.empty()) throw std::runtime_error("train_dan: empty training split");

    DanTrainResult result;
    result.model = DanModel::init(ds.vocab_size, ds.num_codes, cfg, init_rng, pretrained);

    for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(train_idx);
        double loss_sum = 0.0;
        for (size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const size_t len = std::min<size_t>(cfg.batch_size, train_idx.size() - start);
            const std::span<const uint32_t> batch(train_idx.data() + start, len);
            loss_sum += batch_loss(result.model, ds, batch) * static_cast<double>(len);
            const DanGradients g = backward(result.model, ds, batch);
            rmsprop_step(result.model, g, cfg);
        }
        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.mean_train_loss = loss_sum / static_cast<double>(train_idx.size());
        entry.val_macro_f1 = validation_macro_f1(result.model, ds, val_idx, cfg.sigmoid_threshold);
        result.log.push_back(entry);
    }
    return result;
}

inline Checkpoint to_checkpoint(const DanModel& model, uint64_t vocab_hash) {
    Checkpoint ckpt;
    ckpt.kind = Checkpoint::Kind::dan;
    ckpt.vocab_hash = vocab_hash;
    ckpt.meta["activation"] = to_string(model.activation);
    ckpt.meta["embed_dim"] = std::to_string(model.embed_dim());
    ckpt.meta["hidden_dim"] = std::to_string(model.hidden_dim());
    ckpt.meta["num_codes"] = std::to_string(model.num_codes());
    ckpt.meta["vocab_size"] = std::to_string(model.vocab_size());
    ckpt.set_array("E", {model.E.rows, model.E.cols}, model.E.values);
    ckpt.set_array("W1", {model.W1.rows, model.W1.cols}, model.W1.values);
    ckpt.set_array("b1", {model.b1.size()}, model.b1);
    ckpt.set_array("W2", {model.W2.rows, model.W2.cols}, model.W2.values);
    ckpt.set_array("b2", {model.b2.size()}, model.b2);
    return ckpt;
}

inline DanModel dan_from_checkpoint(const Checkpoint& ckpt) {
    ckpt.require_kind(Checkpoint::Kind::dan);
    DanModel m;
    m.activation = activation_from_string(ckpt.meta.at("activation"));
    auto mat = [&](const char* name) {
        const auto& a = ckpt.array(name);
        if (a.shape.size() != 2) throw std::runtime_error(std::string("dan checkpoint: ") + name + " must be 2-D");
        DenseMatrix d(a.shape[0], a.shape[1]);
        d.values = a.values;
        return d;
    };
    auto vec = [&](const char* name) {
        const auto& a = ckpt.array(name);
        if (a.shape.size() != 1) throw std::runtime_error(std::string("dan checkpoint: ") + name + " must be 1-D");
        return a.values;
    };
    m.E = mat("E");
    m.W1 = mat("W1");
    m.b1 = vec("b1");
    m.W2 = mat("W2");
    m.b2 = vec("b2");
    m.cache_E = DenseMatrix(m.E.rows, m.E.cols);
    m.cache_W1 = DenseMatrix(m.W1.rows, m.W1.cols);
    m.cache_b1.assign(m.b1.size(), 0.0);
    m.cache_W2 = DenseMatrix(m.W2.rows, m.W2.cols);
    m.cache_b2.assign(m.b2.size(), 0.0);
    return m;
}

} // namespace prep

#endif
