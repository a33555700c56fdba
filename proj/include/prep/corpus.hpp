#ifndef PREP_CORPUS_HPP
#define PREP_CORPUS_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "prep/io.hpp"
#include "prep/rng.hpp"

namespace prep {

enum class CodeType : uint8_t { icd9_dx, icd9_proc, cpt };

inline const char* to_string(CodeType t) {
    switch (t) {
        case CodeType::icd9_dx: return "icd9_dx";
        case CodeType::icd9_proc: return "icd9_proc";
        case CodeType::cpt: return "cpt";
    }
    return "?";
}

inline CodeType code_type_from_string(const std::string& s) {
    if (s == "icd9_dx") return CodeType::icd9_dx;
    if (s == "icd9_proc") return CodeType::icd9_proc;
    if (s == "cpt") return CodeType::cpt;
    throw std::runtime_error("unknown code_type: \"" + s + "\"");
}

struct RawCode {
    CodeType type;
    std::string code;

    auto operator<=>(const RawCode&) const = default;
};

// One patient: all notes concatenated into a single CUI token sequence
// (multiplicity preserved) plus the set of raw billing codes.
struct PatientRecord {
    std::string patient_id;
    std::vector<std::string> cuis;
    std::vector<RawCode> codes;   // kept sorted unique (set semantics)
};

// Category-prefix lengths used when collapsing codes. ICD9 diagnostic E-codes
// take one extra character so "E815" stays a category rather than "E81".
struct CollapseRules {
    size_t dx_prefix = 3;
    size_t dx_ecode_prefix = 4;
    size_t proc_prefix = 2;
    size_t cpt_prefix = 3;
};

// Collapses a billing code to its general category, tagged by code system so
// identical digit strings from different systems never collide. Already
// collapsed input is returned unchanged, which makes the function a
// projection: collapse(collapse(x)) == collapse(x).
inline std::string collapse_code(CodeType type, const std::string& code, const CollapseRules& rules = {}) {
    if (code.empty()) throw std::invalid_argument("collapse_code: empty code string");
    std::string upper = code;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    const char* tag = type == CodeType::icd9_dx ? "DX:" : type == CodeType::icd9_proc ? "PR:" : "CPT:";
    if (upper.starts_with(tag)) return upper;
    size_t n = 0;
    switch (type) {
        case CodeType::icd9_dx: n = upper[0] == 'E' ? rules.dx_ecode_prefix : rules.dx_prefix; break;
        case CodeType::icd9_proc: n = rules.proc_prefix; break;
        case CodeType::cpt: n = rules.cpt_prefix; break;
    }
    return tag + upper.substr(0, std::min(n, upper.size()));
}

struct PreprocessConfig {
    uint64_t cui_min_freq = 100;       // keep CUIs with corpus frequency >= this
    uint64_t patient_max_cuis = 10000; // drop patients with more tokens (with multiplicity)
    uint64_t code_min_patients = 1000; // keep codes with at least this many positive patients
    CollapseRules collapse;
    double train_fraction = 0.8;
    uint64_t seed = 0;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("PreprocessConfig: train_fraction must be in (0, 1)");
    }
};

// Dense token -> index bijection with per-token corpus frequency.
class Vocabulary {
public:
    Vocabulary() = default;

    uint32_t add(const std::string& token, uint64_t freq) {
        auto [it, inserted] = index_.emplace(token, static_cast<uint32_t>(tokens_.size()));
        if (!inserted) throw std::logic_error("Vocabulary::add: duplicate token " + token);
        tokens_.push_back(token);
        freqs_.push_back(freq);
        return it->second;
    }

    std::optional<uint32_t> index_of(const std::string& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& token(uint32_t i) const { return tokens_.at(i); }
    uint64_t frequency(uint32_t i) const { return freqs_.at(i); }
    const std::vector<uint64_t>& frequencies() const { return freqs_; }
    size_t size() const { return tokens_.size(); }

    uint64_t hash() const {
        uint64_t h = 14695981039346656037ULL;
        for (const auto& t : tokens_) {
            h = fnv1a64(t, h);
            h = fnv1a64("\n", h);
        }
        return h;
    }

    void save(const std::string& path) const {
        json arr = json::array();
        for (size_t i = 0; i < tokens_.size(); ++i)
            arr.push_back(json{{"token", tokens_[i]}, {"freq", freqs_[i]}});
        write_text_file(path, arr.dump(1) + "\n");
    }

    static Vocabulary load(const std::string& path) {
        json arr = json::parse(read_text_file(path));
        if (!arr.is_array()) throw std::runtime_error(path + ": expected a JSON array");
        Vocabulary v;
        for (const auto& item : arr) v.add(item.at("token").get<std::string>(), item.at("freq").get<uint64_t>());
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::vector<uint64_t> freqs_;
    std::unordered_map<std::string, uint32_t> index_;
};

// Dense collapsed-code -> index bijection with positive-patient counts. The
// size of this space is the width of the code-prediction output layer.
class CodeSpace {
public:
    CodeSpace() = default;

    uint32_t add(const std::string& code, uint64_t positive_patients) {
        auto [it, inserted] = index_.emplace(code, static_cast<uint32_t>(codes_.size()));
        if (!inserted) throw std::logic_error("CodeSpace::add: duplicate code " + code);
        codes_.push_back(code);
        counts_.push_back(positive_patients);
        return it->second;
    }

    std::optional<uint32_t> index_of(const std::string& code) const {
        auto it = index_.find(code);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& code(uint32_t i) const { return codes_.at(i); }
    uint64_t positive_patients(uint32_t i) const { return counts_.at(i); }
    size_t size() const { return codes_.size(); }

    uint64_t hash() const {
        uint64_t h = 14695981039346656037ULL;
        for (const auto& c : codes_) {
            h = fnv1a64(c, h);
            h = fnv1a64("\n", h);
        }
        return h;
    }

    void save(const std::string& path) const {
        json arr = json::array();
        for (size_t i = 0; i < codes_.size(); ++i)
            arr.push_back(json{{"code", codes_[i]}, {"patients", counts_[i]}});
        write_text_file(path, arr.dump(1) + "\n");
    }

    static CodeSpace load(const std::string& path) {
        json arr = json::parse(read_text_file(path));
        if (!arr.is_array()) throw std::runtime_error(path + ": expected a JSON array");
        CodeSpace c;
        for (const auto& item : arr)
            c.add(item.at("code").get<std::string>(), item.at("patients").get<uint64_t>());
        return c;
    }

private:
    std::vector<std::string> codes_;
    std::vector<uint64_t> counts_;
    std::unordered_map<std::string, uint32_t> index_;
};

enum class Split : uint8_t { train, validation };

struct EncodedPatient {
    std::string patient_id;
    std::vector<uint32_t> sequence;     // CUI indices in document order, repeats kept
    std::vector<uint32_t> unique_cuis;  // sorted unique indices
    std::vector<uint32_t> cui_counts;   // multiplicities aligned with unique_cuis
    std::vector<uint8_t> targets;       // multi-hot over the code space
    Split split = Split::train;
};

struct EncodedDataset {
    uint32_t vocab_size = 0;
    uint32_t num_codes = 0;
    uint64_t vocab_hash = 0;
    uint64_t codespace_hash = 0;
    std::vector<EncodedPatient> patients;

    std::vector<uint32_t> split_indices(Split s) const {
        std::vector<uint32_t> out;
        for (uint32_t i = 0; i < patients.size(); ++i)
            if (patients[i].split == s) out.push_back(i);
        return out;
    }

    void save(const std::string& path) const;
    static EncodedDataset load(const std::string& path);
};

namespace detail {

inline std::pair<std::vector<uint32_t>, std::vector<uint32_t>> unique_with_counts(
    std::span<const uint32_t> sequence) {
    std::vector<uint32_t> sorted(sequence.begin(), sequence.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<uint32_t> unique, counts;
    for (size_t i = 0; i < sorted.size();) {
        size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        unique.push_back(sorted[i]);
        counts.push_back(static_cast<uint32_t>(j - i));
        i = j;
    }
    return {std::move(unique), std::move(counts)};
}

inline uint64_t hex_to_u64(const std::string& s) { return std::stoull(s, nullptr, 16); }

inline std::string u64_to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace detail

inline void EncodedDataset::save(const std::string& path) const {
    std::ofstream out = open_output(path);
    json header{{"type", "prep.dataset"},
                {"vocab_size", vocab_size},
                {"num_codes", num_codes},
                {"vocab_hash", detail::u64_to_hex(vocab_hash)},
                {"codespace_hash", detail::u64_to_hex(codespace_hash)}};
    out << header.dump() << "\n";
    for (const auto& p : patients) {
        std::vector<uint32_t> positives;
        for (uint32_t j = 0; j < p.targets.size(); ++j)
            if (p.targets[j]) positives.push_back(j);
        json obj{{"patient_id", p.patient_id},
                 {"cuis", p.sequence},
                 {"codes", positives},
                 {"split", p.split == Split::train ? "train" : "validation"}};
        out << obj.dump() << "\n";
    }
}

inline EncodedDataset EncodedDataset::load(const std::string& path) {
    EncodedDataset ds;
    bool have_header = false;
    for_each_jsonl(path, [&](size_t line_no, const json& obj) {
        if (!have_header) {
            if (!obj.contains("type") || obj.at("type") != "prep.dataset")
                throw std::runtime_error(path + ": missing prep.dataset header line");
            ds.vocab_size = obj.at("vocab_size").get<uint32_t>();
            ds.num_codes = obj.at("num_codes").get<uint32_t>();
            ds.vocab_hash = detail::hex_to_u64(obj.at("vocab_hash").get<std::string>());
            ds.codespace_hash = detail::hex_to_u64(obj.at("codespace_hash").get<std::string>());
            have_header = true;
            return;
        }
        EncodedPatient p;
        p.patient_id = obj.at("patient_id").get<std::string>();
        p.sequence = obj.at("cuis").get<std::vector<uint32_t>>();
        for (uint32_t idx : p.sequence)
            if (idx >= ds.vocab_size)
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": CUI index out of range");
        std::tie(p.unique_cuis, p.cui_counts) = detail::unique_with_counts(p.sequence);
        p.targets.assign(ds.num_codes, 0);
        for (uint32_t j : obj.at("codes").get<std::vector<uint32_t>>()) {
            if (j >= ds.num_codes)
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": code index out of range");
            p.targets[j] = 1;
        }
        const std::string split = obj.at("split").get<std::string>();
        if (split == "train") p.split = Split::train;
        else if (split == "validation") p.split = Split::validation;
        else throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown split tag " + split);
        ds.patients.push_back(std::move(p));
    });
    if (!have_header) throw std::runtime_error(path + ": empty dataset file");
    return ds;
}

// Corpus file: JSON Lines, one patient per line:
//   {"patient_id": str, "cuis": [str, ...], "codes": [{"type": ..., "code": ...}, ...]}
inline std::vector<PatientRecord> load_corpus(const std::string& path) {
    std::vector<PatientRecord> records;
    std::unordered_map<std::string, size_t> seen_lines;
    for_each_jsonl(path, [&](size_t line_no, const json& obj) {
        PatientRecord rec;
        try {
            rec.patient_id = obj.at("patient_id").get<std::string>();
            rec.cuis = obj.at("cuis").get<std::vector<std::string>>();
            for (const auto& c : obj.at("codes")) {
                rec.codes.push_back(
                    {code_type_from_string(c.at("type").get<std::string>()), c.at("code").get<std::string>()});
            }
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (rec.patient_id.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty patient_id");
        auto [it, inserted] = seen_lines.emplace(rec.patient_id, line_no);
        if (!inserted)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": duplicate patient_id \"" +
                                     rec.patient_id + "\" first seen on line " + std::to_string(it->second));
        std::sort(rec.codes.begin(), rec.codes.end());
        rec.codes.erase(std::unique(rec.codes.begin(), rec.codes.end()), rec.codes.end());
        records.push_back(std::move(rec));
    });
    return records;
}

inline void save_corpus(const std::string& path, const std::vector<PatientRecord>& records) {
    std::ofstream out = open_output(path);
    for (const auto& rec : records) {
        json codes = json::array();
        for (const auto& c : rec.codes) codes.push_back(json{{"type", to_string(c.type)}, {"code", c.code}});
        json obj{{"patient_id", rec.patient_id}, {"cuis", rec.cuis}, {"codes", codes}};
        out << obj.dump() << "\n";
    }
}

// Order-preserving encoding; out-of-vocabulary tokens are silently dropped so
// corpora from other institutions can be pushed through a fitted vocabulary.
inline std::vector<uint32_t> encode_sequence(const PatientRecord& record, const Vocabulary& vocab) {
    std::vector<uint32_t> seq;
    seq.reserve(record.cuis.size());
    for (const auto& tok : record.cuis)
        if (auto idx = vocab.index_of(tok)) seq.push_back(*idx);
    return seq;
}

struct EncodedCuis {
    std::vector<uint32_t> unique_cuis;
    std::vector<uint32_t> cui_counts;
};

inline EncodedCuis encode_patient(const PatientRecord& record, const Vocabulary& vocab) {
    auto seq = encode_sequence(record, vocab);
    EncodedCuis enc;
    std::tie(enc.unique_cuis, enc.cui_counts) = detail::unique_with_counts(seq);
    return enc;
}

struct PreprocessResult {
    Vocabulary vocab;
    CodeSpace codes;
    EncodedDataset dataset;
};

// Filter pipeline, in fixed order: CUI frequency filter, patient-size filter,
// code filter, empty-patient cleanup. The ordered pass repeats until nothing
// changes, so running preprocess on its own output is a no-op.
inline PreprocessResult preprocess(const std::vector<PatientRecord>& corpus, const PreprocessConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw std::runtime_error("preprocess: empty corpus");

    struct Work {
        const PatientRecord* rec;
        std::vector<std::string> tokens;
        std::vector<std::string> codes;  // collapsed, sorted unique
        bool alive = true;
    };
    std::vector<Work> work;
    work.reserve(corpus.size());
    for (const auto& rec : corpus) {
        Work w;
        w.rec = &rec;
        w.tokens = rec.cuis;
        std::set<std::string> collapsed;
        for (const auto& c : rec.codes) collapsed.insert(collapse_code(c.type, c.code, cfg.collapse));
        w.codes.assign(collapsed.begin(), collapsed.end());
        work.push_back(std::move(w));
    }

    bool changed = true;
    while (changed) {
        changed = false;

        std::unordered_map<std::string, uint64_t> cui_freq;
        for (const auto& w : work)
            if (w.alive)
                for (const auto& t : w.tokens) ++cui_freq[t];
        for (auto& w : work) {
            if (!w.alive) continue;
            auto kept = std::erase_if(w.tokens,
                                      [&](const std::string& t) { return cui_freq.at(t) < cfg.cui_min_freq; });
            if (kept > 0) changed = true;
        }

        for (auto& w : work) {
            if (w.alive && w.tokens.size() > cfg.patient_max_cuis) {
                w.alive = false;
                changed = true;
            }
        }

        std::unordered_map<std::string, uint64_t> code_patients;
        for (const auto& w : work)
            if (w.alive)
                for (const auto& c : w.codes) ++code_patients[c];
        for (auto& w : work) {
            if (!w.alive) continue;
            auto dropped = std::erase_if(
                w.codes, [&](const std::string& c) { return code_patients.at(c) < cfg.code_min_patients; });
            if (dropped > 0) changed = true;
        }

        for (auto& w : work) {
            if (w.alive && (w.tokens.empty() || w.codes.empty())) {
                w.alive = false;
                changed = true;
            }
        }
    }

    std::map<std::string, uint64_t> kept_cui_freq;
    std::map<std::string, uint64_t> kept_code_patients;
    for (const auto& w : work) {
        if (!w.alive) continue;
        for (const auto& t : w.tokens) ++kept_cui_freq[t];
        for (const auto& c : w.codes) ++kept_code_patients[c];
    }
    if (kept_cui_freq.empty()) throw std::runtime_error("preprocess: all patients filtered out");

    PreprocessResult result;
    for (const auto& [tok, freq] : kept_cui_freq) result.vocab.add(tok, freq);
    for (const auto& [code, cnt] : kept_code_patients) result.codes.add(code, cnt);

    result.dataset.vocab_size = static_cast<uint32_t>(result.vocab.size());
    result.dataset.num_codes = static_cast<uint32_t>(result.codes.size());
    result.dataset.vocab_hash = result.vocab.hash();
    result.dataset.codespace_hash = result.codes.hash();

    for (const auto& w : work) {
        if (!w.alive) continue;
        EncodedPatient p;
        p.patient_id = w.rec->patient_id;
        p.sequence.reserve(w.tokens.size());
        for (const auto& t : w.tokens) p.sequence.push_back(*result.vocab.index_of(t));
        std::tie(p.unique_cuis, p.cui_counts) = detail::unique_with_counts(p.sequence);
        p.targets.assign(result.codes.size(), 0);
        for (const auto& c : w.codes) p.targets[*result.codes.index_of(c)] = 1;
        result.dataset.patients.push_back(std::move(p));
    }

    // Seeded shuffle, then prefix cut: floor(train_fraction * n) patients train.
    std::vector<uint32_t> order(result.dataset.patients.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(cfg.seed).split("preprocess/split");
    rng.shuffle(order);
    const size_t train_count =
        static_cast<size_t>(cfg.train_fraction * static_cast<double>(order.size()));
    for (size_t pos = 0; pos < order.size(); ++pos)
        result.dataset.patients[order[pos]].split = pos < train_count ? Split::train : Split::validation;

    return result;
}

} // namespace prep

#endif
