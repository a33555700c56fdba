#ifndef TESTS_SUPPORT_GRADCHECK_HPP
#define TESTS_SUPPORT_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "prep/cbow.hpp"
#include "prep/dan.hpp"
#include "support/oracles.hpp"

// Shared analytic-vs-numeric gradient checks, used by the unit suites and the
// acceptance harness alike.
namespace gradcheck {

// Worst relative error between prep::backward and central finite differences
// of prep::batch_loss on one seeded tiny model (12 CUIs, 4 codes, 3 patients).
inline double dan_fd_worst(uint64_t seed) {
    const uint32_t vocab = 12, d = 6, hd = 5, n = 4;
    prep::DanConfig cfg;
    cfg.embed_dim = d;
    cfg.hidden_dim = hd;
    cfg.seed = seed;
    prep::Rng rng(seed);
    prep::DanModel model = prep::DanModel::init(vocab, n, cfg, rng);

    prep::Rng data_rng(seed + 100);
    prep::EncodedDataset ds;
    ds.vocab_size = vocab;
    ds.num_codes = n;
    for (uint32_t i = 0; i < 3; ++i) {
        prep::EncodedPatient p;
        p.patient_id = "p" + std::to_string(i);
        const size_t k = 1 + data_rng.below(4);
        std::vector<uint32_t> seq;
        for (size_t t = 0; t < k; ++t) seq.push_back(static_cast<uint32_t>(data_rng.below(vocab)));
        std::tie(p.unique_cuis, p.cui_counts) = prep::detail::unique_with_counts(seq);
        p.sequence = seq;
        p.targets.resize(n);
        for (uint32_t j = 0; j < n; ++j) p.targets[j] = data_rng.below(2) ? 1 : 0;
        ds.patients.push_back(std::move(p));
    }
    const std::vector<uint32_t> batch{0, 1, 2};

    const prep::DanGradients g = prep::backward(model, ds, batch);

    prep::DanModel probe = model;
    auto loss = [&]() { return prep::batch_loss(probe, ds, batch); };

    double worst = 0.0;
    auto sweep = [&](std::span<const double> analytic, std::span<double> params) {
        for (size_t i = 0; i < analytic.size(); ++i) {
            const double numeric = oracle::central_diff(&params[i], loss);
            worst = std::max(worst, oracle::rel_err(analytic[i], numeric));
        }
    };
    sweep(g.W1.values, probe.W1.values);
    sweep(g.b1, probe.b1);
    sweep(g.W2.values, probe.W2.values);
    sweep(g.b2, probe.b2);
    for (const auto& [row, grad] : g.E_rows) sweep(grad, probe.E.row_span(row));
    return worst;
}

// Worst relative error for one seeded CBOW step. Analytic gradients are
// recovered from a single step taken with a power-of-two learning rate
// (division is then exact) and compared against central finite differences
// of the loss.
inline double cbow_fd_worst(uint64_t seed) {
    const uint32_t vocab = 20, dim = 8;
    prep::Rng rng(seed * 7919 + 1);

    std::vector<uint32_t> context;
    const size_t ctx_len = 1 + rng.below(4);
    for (size_t i = 0; i < ctx_len; ++i) context.push_back(static_cast<uint32_t>(rng.below(vocab)));
    const uint32_t target = static_cast<uint32_t>(rng.below(vocab));
    std::vector<uint32_t> negatives;
    for (size_t i = 0; i < 4; ++i) {
        uint32_t n = static_cast<uint32_t>(rng.below(vocab));
        if (n == target) n = (n + 1) % vocab;
        negatives.push_back(n);
    }

    prep::CbowModel base;
    base.input = prep::DenseMatrix(vocab, dim);
    base.output = prep::DenseMatrix(vocab, dim);
    prep::Rng weight_rng(seed);
    for (double& v : base.input.values) v = weight_rng.uniform(-0.8, 0.8);
    for (double& v : base.output.values) v = weight_rng.uniform(-0.8, 0.8);

    prep::CbowModel stepped = base;
    const double lr = 0x1.0p-10;
    prep::cbow_step(stepped, context, target, negatives, lr);

    prep::CbowModel probe = base;
    auto loss = [&]() { return prep::cbow_loss(probe, context, target, negatives); };

    double worst = 0.0;
    auto sweep = [&](const prep::DenseMatrix& before, const prep::DenseMatrix& after,
                     prep::DenseMatrix& probed) {
        for (size_t i = 0; i < before.values.size(); ++i) {
            const double analytic = (before.values[i] - after.values[i]) / lr;
            const double numeric = oracle::central_diff(&probed.values[i], loss);
            if (analytic == 0.0 && std::fabs(numeric) < 1e-9) continue;  // untouched rows
            worst = std::max(worst, oracle::rel_err(analytic, numeric));
        }
    };
    sweep(base.input, stepped.input, probe.input);
    sweep(base.output, stepped.output, probe.output);
    return worst;
}

}  // namespace gradcheck

#endif
