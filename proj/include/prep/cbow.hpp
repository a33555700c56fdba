#ifndef PREP_CBOW_HPP
#define PREP_CBOW_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prep/checkpoint.hpp"
#include "prep/corpus.hpp"
#include "prep/matrix.hpp"
#include "prep/rng.hpp"

namespace prep {

struct CbowConfig {
    uint32_t window = 5;
    uint32_t dim = 300;
    uint32_t negatives = 5;
    uint32_t epochs = 5;
    double learning_rate = 0.025;
    double min_learning_rate = 1e-4;
    double unigram_power = 0.75;
    uint64_t seed = 0;

    void validate() const {
        if (window < 1) throw std::invalid_argument("CbowConfig: window must be >= 1");
        if (dim < 1) throw std::invalid_argument("CbowConfig: dim must be >= 1");
        if (negatives < 1) throw std::invalid_argument("CbowConfig: negatives must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("CbowConfig: learning_rate must be positive");
        if (!(min_learning_rate > 0.0) || min_learning_rate > learning_rate)
            throw std::invalid_argument("CbowConfig: min_learning_rate must be in (0, learning_rate]");
    }
};

struct CbowModel {
    DenseMatrix input;   // |V| x dim, the pretrained embeddings
    DenseMatrix output;  // |V| x dim

    uint32_t vocab_size() const { return static_cast<uint32_t>(input.rows); }
    uint32_t dim() const { return static_cast<uint32_t>(input.cols); }

    // Input rows uniform in [-0.5/dim, 0.5/dim], output rows zero.
    static CbowModel init(uint32_t vocab, uint32_t dim, Rng& rng) {
        CbowModel m;
        m.input = DenseMatrix(vocab, dim);
        m.output = DenseMatrix(vocab, dim);
        const double half = 0.5 / static_cast<double>(dim);
        for (double& v : m.input.values) v = rng.uniform(-half, half);
        return m;
    }
};

struct CbowPair {
    std::vector<uint32_t> context;
    uint32_t target;
};

// Contexts are all positions within `window` of the target inside one patient
// sequence; positions whose context would be empty yield no pair.
inline std::vector<CbowPair> build_pairs(std::span<const uint32_t> sequence, uint32_t window) {
    std::vector<CbowPair> pairs;
    const size_t n = sequence.size();
    for (size_t t = 0; t < n; ++t) {
        CbowPair p;
        p.target = sequence[t];
        const size_t lo = t >= window ? t - window : 0;
        const size_t hi = std::min(n, t + window + 1);
        for (size_t c = lo; c < hi; ++c)
            if (c != t) p.context.push_back(sequence[c]);
        if (!p.context.empty()) pairs.push_back(std::move(p));
    }
    return pairs;
}

// Cumulative table over freq^power, sampled by binary search.
class UnigramTable {
public:
    UnigramTable(const std::vector<uint64_t>& freqs, double power) {
        if (freqs.empty()) throw std::invalid_argument("UnigramTable: empty frequency table");
        cumulative_.reserve(freqs.size());
        double total = 0.0;
        for (uint64_t f : freqs) {
            total += std::pow(static_cast<double>(f), power);
            cumulative_.push_back(total);
        }
        if (!(total > 0.0)) throw std::invalid_argument("UnigramTable: all frequencies zero");
    }

    uint32_t sample(Rng& rng) const {
        const double u = rng.next_double() * cumulative_.back();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        const size_t idx = std::min(static_cast<size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
        return static_cast<uint32_t>(idx);
    }

private:
    std::vector<double> cumulative_;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double log_sigmoid(double x) {
    // stable -softplus(-x)
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

} // namespace detail

// Loss for one (context, target, negatives) triple at current parameters.
inline double cbow_loss(const CbowModel& model, std::span<const uint32_t> context, uint32_t target,
                        std::span<const uint32_t> negatives) {
    const size_t dim = model.input.cols;
    Vector h(dim, 0.0);
    for (uint32_t c : context) {
        const double* row = model.input.row(c);
        for (size_t d = 0; d < dim; ++d) h[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(context.size());
    for (double& v : h) v *= inv;

    double loss = -detail::log_sigmoid(dot(h, model.output.row_span(target)));
    for (uint32_t n : negatives) loss += -detail::log_sigmoid(-dot(h, model.output.row_span(n)));
    return loss;
}

// One SGD step; all gradients are evaluated at the incoming parameters and
// applied afterwards, so the update is the exact gradient of cbow_loss.
inline double cbow_step(CbowModel& model, std::span<const uint32_t> context, uint32_t target,
                        std::span<const uint32_t> negatives, double lr) {
    if (context.empty()) throw std::invalid_argument("cbow_step: empty context");
    const size_t dim = model.input.cols;

    Vector h(dim, 0.0);
    for (uint32_t c : context) {
        const double* row = model.input.row(c);
        for (size_t d = 0; d < dim; ++d) h[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(context.size());
    for (double& v : h) v *= inv;

    Vector grad_h(dim, 0.0);
    double loss = 0.0;

    struct OutUpdate {
        uint32_t row;
        double coeff;  // d loss / d logit
    };
    std::vector<OutUpdate> updates;
    updates.reserve(1 + negatives.size());

    {
        const double logit = dot(h, model.output.row_span(target));
        loss += -detail::log_sigmoid(logit);
        updates.push_back({target, detail::sigmoid(logit) - 1.0});
    }
    for (uint32_t n : negatives) {
        const double logit = dot(h, model.output.row_span(n));
        loss += -detail::log_sigmoid(-logit);
        updates.push_back({n, detail::sigmoid(logit)});
    }

    for (const auto& u : updates) {
        const double* orow = model.output.row(u.row);
        for (size_t d = 0; d < dim; ++d) grad_h[d] += u.coeff * orow[d];
    }
    for (const auto& u : updates) {
        double* orow = model.output.row(u.row);
        for (size_t d = 0; d < dim; ++d) orow[d] -= lr * u.coeff * h[d];
    }
    for (uint32_t c : context) {
        double* irow = model.input.row(c);
        for (size_t d = 0; d < dim; ++d) irow[d] -= lr * grad_h[d] * inv;
    }
    return loss;
}

struct CbowTrainResult {
    CbowModel model;
    std::vector<double> epoch_mean_loss;
};

// Sequential SGD over per-patient sequences in dataset order; negatives from
// the unigram^power table, resampled when they collide with the target.
inline CbowTrainResult train_cbow(const EncodedDataset& dataset, const CbowConfig& cfg) {
    cfg.validate();
    if (dataset.vocab_size == 0) throw std::runtime_error("train_cbow: empty vocabulary");
    if (dataset.patients.empty()) throw std::runtime_error("train_cbow: empty dataset");

    std::vector<uint64_t> freqs(dataset.vocab_size, 0);
    uint64_t total_pairs = 0;
    for (const auto& p : dataset.patients) {
        for (uint32_t idx : p.sequence) ++freqs[idx];
        if (p.sequence.size() >= 2) total_pairs += p.sequence.size();
    }

    const Rng root(cfg.seed);
    Rng init_rng = root.split("cbow/init");
    Rng neg_rng = root.split("cbow/negatives");

    CbowTrainResult result;
    result.model = CbowModel::init(dataset.vocab_size, cfg.dim, init_rng);
    if (cfg.epochs == 0 || total_pairs == 0) return result;

    const UnigramTable table(freqs, cfg.unigram_power);
    const uint64_t total_targets = static_cast<uint64_t>(cfg.epochs) * total_pairs;
    uint64_t processed = 0;
    std::vector<uint32_t> negatives(cfg.negatives);

    for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        uint64_t epoch_pairs = 0;
        for (const auto& patient : dataset.patients) {
            for (const auto& pair : build_pairs(patient.sequence, cfg.window)) {
                for (uint32_t k = 0; k < cfg.negatives; ++k) {
                    uint32_t n = pair.target;
                    for (int attempt = 0; attempt < 100 && n == pair.target; ++attempt)
                        n = table.sample(neg_rng);
                    if (n == pair.target) n = (pair.target + 1) % dataset.vocab_size;
                    negatives[k] = n;
                }
                const double progress =
                    static_cast<double>(processed) / static_cast<double>(total_targets);
                const double lr =
                    cfg.learning_rate + (cfg.min_learning_rate - cfg.learning_rate) * progress;
                epoch_loss += cbow_step(result.model, pair.context, pair.target, negatives, lr);
                ++processed;
                ++epoch_pairs;
            }
        }
        result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_pairs));
    }
    return result;
}

inline Checkpoint to_checkpoint(const CbowModel& model, uint64_t vocab_hash, const CbowConfig& cfg) {
    Checkpoint ckpt;
    ckpt.kind = Checkpoint::Kind::cbow;
    ckpt.vocab_hash = vocab_hash;
    ckpt.meta["dim"] = std::to_string(model.dim());
    ckpt.meta["vocab_size"] = std::to_string(model.vocab_size());
    ckpt.meta["window"] = std::to_string(cfg.window);
    ckpt.meta["negatives"] = std::to_string(cfg.negatives);
    ckpt.set_array("input", {model.input.rows, model.input.cols}, model.input.values);
    ckpt.set_array("output", {model.output.rows, model.output.cols}, model.output.values);
    return ckpt;
}

inline CbowModel cbow_from_checkpoint(const Checkpoint& ckpt) {
    ckpt.require_kind(Checkpoint::Kind::cbow);
    CbowModel m;
    const auto& in = ckpt.array("input");
    const auto& out = ckpt.array("output");
    if (in.shape.size() != 2 || out.shape.size() != 2)
        throw std::runtime_error("cbow checkpoint: embedding arrays must be 2-D");
    m.input = DenseMatrix(in.shape[0], in.shape[1]);
    m.input.values = in.values;
    m.output = DenseMatrix(out.shape[0], out.shape[1]);
    m.output.values = out.values;
    return m;
}

// One "token v0 v1 ..." row per line, for eyeballing embeddings.
inline void save_embeddings_text(const std::string& path, const DenseMatrix& embeddings,
                                 const Vocabulary& vocab) {
    if (embeddings.rows != vocab.size())
        throw std::invalid_argument("save_embeddings_text: row count does not match vocabulary");
    std::ofstream out = open_output(path);
    out.precision(17);
    for (size_t i = 0; i < embeddings.rows; ++i) {
        out << vocab.token(static_cast<uint32_t>(i));
        for (size_t d = 0; d < embeddings.cols; ++d) out << ' ' << embeddings(i, d);
        out << '\n';
    }
}

} // namespace prep

#endif
