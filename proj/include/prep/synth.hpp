#ifndef PREP_SYNTH_HPP
#define PREP_SYNTH_HPP

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "prep/corpus.hpp"
#include "prep/rng.hpp"

namespace prep {

// Generative model: disjoint token blocks per latent factor, billing codes
// linked to factors via Bernoulli rates, phenotype driven by the same factors.
struct SynthConfig {
    uint32_t num_patients = 2000;
    uint32_t vocab_size = 500;
    uint32_t num_codes = 20;
    uint32_t num_factors = 4;
    uint32_t cuis_per_patient_min = 30;
    uint32_t cuis_per_patient_max = 120;
    double noise_rate = 0.1;       // token drawn uniformly over full vocab instead of active block
    double code_on_prob = 0.8;     // code emitted when its linked factor is active
    double code_off_prob = 0.05;   // code emitted anyway
    double questionable_keep_prob = 0.6;  // gate on the rare factor pair that yields "questionable"
    double phenotype_noise = 0.05; // uniform relabel probability
    uint64_t seed = 0;

    uint32_t tokens_per_factor() const { return vocab_size / num_factors; }

    void validate() const {
        auto prob = [](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0))
                throw std::invalid_argument(std::string("SynthConfig: ") + name + " must be in [0, 1]");
        };
        prob(noise_rate, "noise_rate");
        prob(code_on_prob, "code_on_prob");
        prob(code_off_prob, "code_off_prob");
        prob(questionable_keep_prob, "questionable_keep_prob");
        prob(phenotype_noise, "phenotype_noise");
        if (num_patients == 0) throw std::invalid_argument("SynthConfig: num_patients must be positive");
        if (num_codes == 0) throw std::invalid_argument("SynthConfig: num_codes must be positive");
        if (num_factors < 2) throw std::invalid_argument("SynthConfig: need at least 2 factors");
        if (vocab_size == 0 || vocab_size % num_factors != 0)
            throw std::invalid_argument("SynthConfig: factor blocks must partition the vocabulary (vocab_size divisible by num_factors)");
        if (cuis_per_patient_min == 0 || cuis_per_patient_min > cuis_per_patient_max)
            throw std::invalid_argument("SynthConfig: bad cuis_per_patient range");
    }
};

struct SynthResult {
    std::vector<PatientRecord> corpus;
    std::vector<std::pair<std::string, std::string>> labels;  // patient_id -> phenotype
};

namespace detail {

inline std::string synth_token(uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "C%07u", v + 1);
    return buf;
}

// Raw code strings chosen so that category collapsing maps each code index to
// its own distinct category: 3-digit dx stems, 2-digit proc stems, 3-digit
// cpt stems, all disjoint across indices. Suffix digits vary per patient.
inline RawCode synth_raw_code(uint32_t j, Rng& rng) {
    switch (j % 3) {
        case 0:
            return {CodeType::icd9_dx, std::to_string(100 + j) + "." + std::to_string(rng.below(10))};
        case 1:
            return {CodeType::icd9_proc, std::to_string(10 + j) + "." + std::to_string(rng.below(10))};
        default:
            return {CodeType::cpt,
                    std::to_string(500 + j) + std::to_string(rng.below(10)) + std::to_string(rng.below(10))};
    }
}

} // namespace detail

// Deterministic given cfg.seed; each patient draws from its own substream so
// generation order never affects content.
inline SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    const Rng root(cfg.seed);
    const uint32_t block = cfg.tokens_per_factor();

    SynthResult out;
    out.corpus.reserve(cfg.num_patients);
    out.labels.reserve(cfg.num_patients);

    for (uint32_t i = 0; i < cfg.num_patients; ++i) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "P%06u", i + 1);
        const std::string patient_id = idbuf;
        Rng rng = root.split("synth/patient/" + patient_id);

        // 1 or 2 distinct active factors.
        std::vector<uint32_t> active;
        active.push_back(static_cast<uint32_t>(rng.below(cfg.num_factors)));
        if (rng.below(2) == 1) {
            uint32_t second = static_cast<uint32_t>(rng.below(cfg.num_factors - 1));
            if (second >= active[0]) ++second;
            active.push_back(second);
        }
        const bool has0 = std::find(active.begin(), active.end(), 0u) != active.end();
        const bool has1 = std::find(active.begin(), active.end(), 1u) != active.end();

        PatientRecord rec;
        rec.patient_id = patient_id;
        const uint64_t span = cfg.cuis_per_patient_max - cfg.cuis_per_patient_min + 1;
        const uint64_t n_tokens = cfg.cuis_per_patient_min + rng.below(span);
        rec.cuis.reserve(n_tokens);
        for (uint64_t t = 0; t < n_tokens; ++t) {
            uint32_t v;
            if (rng.next_double() < cfg.noise_rate) {
                v = static_cast<uint32_t>(rng.below(cfg.vocab_size));
            } else {
                const uint32_t f = active[rng.below(active.size())];
                v = f * block + static_cast<uint32_t>(rng.below(block));
            }
            rec.cuis.push_back(detail::synth_token(v));
        }

        for (uint32_t j = 0; j < cfg.num_codes; ++j) {
            const uint32_t linked = j % cfg.num_factors;
            const bool factor_on = std::find(active.begin(), active.end(), linked) != active.end();
            const double p = factor_on ? cfg.code_on_prob : cfg.code_off_prob;
            if (rng.next_double() < p) rec.codes.push_back(detail::synth_raw_code(j, rng));
        }
        std::sort(rec.codes.begin(), rec.codes.end());
        rec.codes.erase(std::unique(rec.codes.begin(), rec.codes.end()), rec.codes.end());

        std::string phenotype;
        if (has0 && has1 && rng.next_double() < cfg.questionable_keep_prob) phenotype = "questionable";
        else if (has0) phenotype = "present";
        else phenotype = "absent";
        if (rng.next_double() < cfg.phenotype_noise) {
            static const char* kClasses[3] = {"present", "absent", "questionable"};
            phenotype = kClasses[rng.below(3)];
        }

        out.corpus.push_back(std::move(rec));
        out.labels.emplace_back(patient_id, std::move(phenotype));
    }
    return out;
}

} // namespace prep

#endif
