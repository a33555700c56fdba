#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "prep/cbow.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace {

prep::CbowModel random_model(uint32_t vocab, uint32_t dim, uint64_t seed) {
    prep::Rng rng(seed);
    prep::CbowModel m;
    m.input = prep::DenseMatrix(vocab, dim);
    m.output = prep::DenseMatrix(vocab, dim);
    for (double& v : m.input.values) v = rng.uniform(-0.8, 0.8);
    for (double& v : m.output.values) v = rng.uniform(-0.8, 0.8);
    return m;
}

double max_gradient_error(uint64_t seed) { return gradcheck::cbow_fd_worst(seed); }

prep::EncodedDataset two_cluster_dataset(uint32_t patients_per_cluster, uint32_t seq_len, uint64_t seed) {
    const uint32_t cluster = 10;
    prep::Rng rng(seed);
    prep::EncodedDataset ds;
    ds.vocab_size = 2 * cluster;
    ds.num_codes = 1;
    for (uint32_t c = 0; c < 2; ++c) {
        for (uint32_t p = 0; p < patients_per_cluster; ++p) {
            prep::EncodedPatient pat;
            pat.patient_id = "c" + std::to_string(c) + "_" + std::to_string(p);
            for (uint32_t t = 0; t < seq_len; ++t)
                pat.sequence.push_back(c * cluster + static_cast<uint32_t>(rng.below(cluster)));
            pat.targets.assign(1, 0);
            ds.patients.push_back(std::move(pat));
        }
    }
    return ds;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(prep::dot(a, a)), nb = std::sqrt(prep::dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return prep::dot(a, b) / (na * nb);
}

}  // namespace

TEST_CASE("build_pairs enumeration", "[cbow]") {
    const std::vector<uint32_t> single{3};
    CHECK(prep::build_pairs(single, 2).empty());

    const std::vector<uint32_t> abc{7, 8, 9};
    const auto pairs = prep::build_pairs(abc, 1);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].target == 7);
    CHECK(pairs[0].context == std::vector<uint32_t>{8});
    CHECK(pairs[1].target == 8);
    CHECK(pairs[1].context == std::vector<uint32_t>{7, 9});
    CHECK(pairs[2].target == 9);
    CHECK(pairs[2].context == std::vector<uint32_t>{8});
}

TEST_CASE("build_pairs saturates at large windows", "[cbow]") {
    const std::vector<uint32_t> seq{1, 2, 3, 4, 5};
    for (const auto& p : prep::build_pairs(seq, 10)) CHECK(p.context.size() == seq.size() - 1);
    CHECK(prep::build_pairs(std::vector<uint32_t>{}, 3).empty());
}

TEST_CASE("all-zero model pays (1+k) ln 2 per pair", "[cbow]") {
    prep::CbowModel m;
    m.input = prep::DenseMatrix(6, 4);
    m.output = prep::DenseMatrix(6, 4);
    const std::vector<uint32_t> context{0, 1};
    const std::vector<uint32_t> negatives{3, 4, 5};
    const double loss = prep::cbow_loss(m, context, 2, negatives);
    CHECK_THAT(loss, Catch::Matchers::WithinRel((1.0 + 3.0) * std::log(2.0), 1e-14));
}

TEST_CASE("analytic gradients match finite differences", "[cbow]") {
    // The fixed well-conditioned case holds to 1e-6; the randomized sweep
    // below is the 1e-4 bulk contract.
    CHECK(max_gradient_error(1) < 1e-6);

    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) worst = std::max(worst, max_gradient_error(seed));
    CHECK(worst < 1e-4);
}

TEST_CASE("a step reduces the pair loss", "[cbow]") {
    prep::CbowModel m = random_model(12, 6, 99);
    const std::vector<uint32_t> context{1, 4, 4};
    const std::vector<uint32_t> negatives{7, 9};
    const uint32_t target = 3;

    const double before = prep::cbow_loss(m, context, target, negatives);
    const double reported = prep::cbow_step(m, context, target, negatives, 0.05);
    const double after = prep::cbow_loss(m, context, target, negatives);
    CHECK_THAT(reported, Catch::Matchers::WithinRel(before, 1e-12));
    CHECK(after < before);

    CHECK_THROWS_AS(prep::cbow_step(m, std::vector<uint32_t>{}, target, negatives, 0.05),
                    std::invalid_argument);
}

TEST_CASE("untouched rows never move", "[cbow]") {
    prep::CbowModel m = random_model(10, 5, 7);
    const prep::CbowModel before = m;
    const std::vector<uint32_t> context{2, 3};
    const std::vector<uint32_t> negatives{6};
    prep::cbow_step(m, context, 5, negatives, 0.1);

    const std::set<uint32_t> touched_in{2, 3};
    const std::set<uint32_t> touched_out{5, 6};
    for (uint32_t r = 0; r < 10; ++r) {
        for (uint32_t c = 0; c < 5; ++c) {
            if (!touched_in.count(r)) CHECK(m.input(r, c) == before.input(r, c));
            if (!touched_out.count(r)) CHECK(m.output(r, c) == before.output(r, c));
        }
    }
}

TEST_CASE("unigram table samples the support", "[cbow]") {
    const std::vector<uint64_t> freqs{0, 100, 1, 0, 50};
    const prep::UnigramTable table(freqs, 0.75);
    prep::Rng rng(3);
    std::vector<size_t> counts(5, 0);
    for (int i = 0; i < 20000; ++i) {
        const uint32_t s = table.sample(rng);
        REQUIRE(s < 5);
        ++counts[s];
    }
    CHECK(counts[0] == 0);
    CHECK(counts[3] == 0);
    CHECK(counts[1] > counts[4]);
    CHECK(counts[4] > counts[2]);
    CHECK(counts[2] > 0);
}

TEST_CASE("epochs=0 returns the seeded initialization", "[cbow]") {
    prep::EncodedDataset ds = two_cluster_dataset(4, 10, 1);
    prep::CbowConfig cfg;
    cfg.dim = 6;
    cfg.epochs = 0;
    cfg.seed = 31;

    const prep::CbowTrainResult res = prep::train_cbow(ds, cfg);
    prep::Rng init_rng = prep::Rng(cfg.seed).split("cbow/init");
    const prep::CbowModel expect = prep::CbowModel::init(ds.vocab_size, cfg.dim, init_rng);
    CHECK(res.model.input.values == expect.input.values);
    CHECK(res.model.output.values == expect.output.values);
    CHECK(res.epoch_mean_loss.empty());

    // Init contract: inputs inside [-0.5/dim, 0.5/dim], outputs all zero.
    const double half = 0.5 / cfg.dim;
    for (double v : res.model.input.values) {
        CHECK(v >= -half);
        CHECK(v < half);
    }
    for (double v : res.model.output.values) CHECK(v == 0.0);
}

TEST_CASE("training is deterministic", "[cbow]") {
    prep::EncodedDataset ds = two_cluster_dataset(6, 12, 4);
    prep::CbowConfig cfg;
    cfg.dim = 6;
    cfg.epochs = 2;
    cfg.window = 3;
    cfg.seed = 8;

    const auto a = prep::train_cbow(ds, cfg);
    const auto b = prep::train_cbow(ds, cfg);
    CHECK(a.model.input.values == b.model.input.values);
    CHECK(a.model.output.values == b.model.output.values);
    CHECK(a.epoch_mean_loss == b.epoch_mean_loss);
}

TEST_CASE("two-cluster corpus separates and the loss settles", "[cbow]") {
    prep::EncodedDataset ds = two_cluster_dataset(30, 30, 12);
    prep::CbowConfig cfg;
    cfg.dim = 8;
    cfg.window = 4;
    cfg.epochs = 5;
    cfg.seed = 2;

    const prep::CbowTrainResult res = prep::train_cbow(ds, cfg);
    REQUIRE(res.epoch_mean_loss.size() == 5);
    for (size_t e = 1; e < res.epoch_mean_loss.size(); ++e)
        CHECK(res.epoch_mean_loss[e] <= res.epoch_mean_loss[e - 1] + 1e-9);

    double intra = 0.0, inter = 0.0;
    size_t n_intra = 0, n_inter = 0;
    for (uint32_t i = 0; i < 20; ++i) {
        for (uint32_t j = i + 1; j < 20; ++j) {
            const double c = cosine(res.model.input.row_span(i), res.model.input.row_span(j));
            if ((i < 10) == (j < 10)) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    }
    CHECK(intra / static_cast<double>(n_intra) > inter / static_cast<double>(n_inter));
}

TEST_CASE("train_cbow rejects degenerate inputs", "[cbow]") {
    prep::EncodedDataset empty;
    empty.vocab_size = 5;
    prep::CbowConfig cfg;
    CHECK_THROWS(prep::train_cbow(empty, cfg));

    prep::CbowConfig bad;
    bad.window = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.negatives = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
