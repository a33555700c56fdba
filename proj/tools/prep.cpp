// prep: file-based pipeline driver. Every subcommand is a pure file
// transformation, deterministic given its inputs and seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prep/cbow.hpp"
#include "prep/checkpoint.hpp"
#include "prep/corpus.hpp"
#include "prep/dan.hpp"
#include "prep/eval.hpp"
#include "prep/io.hpp"
#include "prep/rng.hpp"
#include "prep/svd.hpp"
#include "prep/svm.hpp"
#include "prep/synth.hpp"

namespace {

using prep::json;

// Binds config-file keys to CLI options of the same name; a flag given on the
// command line wins over the config value, which wins over the default.
class KeyBinder {
public:
    template <class T>
    CLI::Option* add(CLI::App* cmd, const std::string& key, T& var, const std::string& desc) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        std::string names = "--" + key;
        if (dashed != key) names += ",--" + dashed;
        CLI::Option* opt = cmd->add_option(names, var, desc);
        appliers_.push_back([opt, key, &var](const json& cfg) {
            if (opt->count() == 0 && cfg.contains(key)) var = cfg.at(key).get<T>();
        });
        return opt;
    }

    CLI::Option* add_flag(CLI::App* cmd, const std::string& key, bool& var, const std::string& desc) {
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        std::string names = "--" + key;
        if (dashed != key) names += ",--" + dashed;
        CLI::Option* opt = cmd->add_flag(names, var, desc);
        appliers_.push_back([opt, key, &var](const json& cfg) {
            if (opt->count() == 0 && cfg.contains(key)) var = cfg.at(key).get<bool>();
        });
        return opt;
    }

    void apply_config(const json& cfg) {
        for (const auto& f : appliers_) f(cfg);
    }

private:
    std::vector<std::function<void(const json&)>> appliers_;
};

void require_path(const std::string& value, const std::string& key) {
    if (value.empty()) throw std::runtime_error("missing required path: --" + key + " (or config key \"" + key + "\")");
}

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void require_hash_match(uint64_t checkpoint_hash, uint64_t data_hash, const std::string& what) {
    if (checkpoint_hash != data_hash)
        throw std::runtime_error("vocabulary hash mismatch: checkpoint has " + hex64(checkpoint_hash) +
                                 ", " + what + " has " + hex64(data_hash));
}

struct EncodedTarget {
    prep::Vocabulary vocab;
    std::vector<std::string> patient_ids;
    std::vector<prep::EncodedCuis> encodings;
};

// Encode a raw corpus against a fitted vocabulary; OOV tokens drop out.
EncodedTarget encode_target(const std::string& vocab_path, const std::string& corpus_path) {
    EncodedTarget t;
    t.vocab = prep::Vocabulary::load(vocab_path);
    size_t empty_count = 0;
    for (const auto& rec : prep::load_corpus(corpus_path)) {
        t.patient_ids.push_back(rec.patient_id);
        t.encodings.push_back(prep::encode_patient(rec, t.vocab));
        if (t.encodings.back().unique_cuis.empty()) ++empty_count;
    }
    if (empty_count > 0)
        std::cerr << "note: " << empty_count << " of " << t.patient_ids.size()
                  << " patients have no in-vocabulary CUIs (zero-vector fallback)\n";
    return t;
}

prep::SvmProblem problem_from_encodings(const EncodedTarget& t, bool counts) {
    prep::SvmProblem p;
    p.num_features = t.vocab.size();
    p.rows.resize(t.encodings.size());
    for (size_t i = 0; i < t.encodings.size(); ++i) {
        const auto& enc = t.encodings[i];
        p.rows[i].reserve(enc.unique_cuis.size());
        for (size_t e = 0; e < enc.unique_cuis.size(); ++e)
            p.rows[i].emplace_back(enc.unique_cuis[e],
                                   counts ? static_cast<double>(enc.cui_counts[e]) : 1.0);
    }
    return p;
}

json metrics_json(const prep::EvalReport& report) {
    json per_label = json::array();
    for (const auto& m : report.per_label)
        per_label.push_back(json{{"label", m.label},
                                 {"precision", m.precision},
                                 {"recall", m.recall},
                                 {"f1", m.f1}});
    return json{{"per_label", per_label},
                {"macro_precision", report.macro_precision},
                {"macro_recall", report.macro_recall},
                {"macro_f1", report.macro_f1}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"patient representation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t global_seed = 0;
    uint32_t threads = 1;
    app.add_option("--config", config_path, "JSON config file with flat keys; flags override");
    CLI::Option* seed_opt = app.add_option("--seed", global_seed, "seed override for the stage");
    app.add_option("--threads", threads, "worker threads where a stage supports fan-out")
        ->check(CLI::PositiveNumber);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus with latent structure");
    synth_cmd->fallthrough();
    KeyBinder synth_keys;
    prep::SynthConfig synth_cfg;
    std::string synth_corpus_out, synth_labels_out;
    synth_keys.add(synth_cmd, "num_patients", synth_cfg.num_patients, "patients to generate");
    synth_keys.add(synth_cmd, "vocab_size", synth_cfg.vocab_size, "CUI vocabulary size");
    synth_keys.add(synth_cmd, "num_codes", synth_cfg.num_codes, "billing codes");
    synth_keys.add(synth_cmd, "num_factors", synth_cfg.num_factors, "latent factors");
    synth_keys.add(synth_cmd, "cuis_per_patient_min", synth_cfg.cuis_per_patient_min, "min tokens per patient");
    synth_keys.add(synth_cmd, "cuis_per_patient_max", synth_cfg.cuis_per_patient_max, "max tokens per patient");
    synth_keys.add(synth_cmd, "noise_rate", synth_cfg.noise_rate, "uniform-token noise probability");
    synth_keys.add(synth_cmd, "code_on_prob", synth_cfg.code_on_prob, "code rate when its factor is active");
    synth_keys.add(synth_cmd, "code_off_prob", synth_cfg.code_off_prob, "code rate otherwise");
    synth_keys.add(synth_cmd, "questionable_keep_prob", synth_cfg.questionable_keep_prob,
                   "gate for the questionable phenotype");
    synth_keys.add(synth_cmd, "phenotype_noise", synth_cfg.phenotype_noise, "uniform relabel probability");
    synth_keys.add(synth_cmd, "corpus_out", synth_corpus_out, "output corpus JSONL");
    synth_keys.add(synth_cmd, "labels_out", synth_labels_out, "output phenotype labels JSONL");

    // preprocess
    auto* prep_cmd = app.add_subcommand("preprocess", "filter, collapse codes, encode, split");
    prep_cmd->fallthrough();
    KeyBinder prep_keys;
    prep::PreprocessConfig prep_cfg;
    std::string prep_corpus, prep_vocab_out, prep_codes_out, prep_dataset_out;
    prep_keys.add(prep_cmd, "corpus", prep_corpus, "input corpus JSONL");
    prep_keys.add(prep_cmd, "cui_min_freq", prep_cfg.cui_min_freq, "keep CUIs with frequency >= this");
    prep_keys.add(prep_cmd, "patient_max_cuis", prep_cfg.patient_max_cuis, "drop patients with more tokens");
    prep_keys.add(prep_cmd, "code_min_patients", prep_cfg.code_min_patients,
                  "keep codes with at least this many positive patients");
    prep_keys.add(prep_cmd, "train_fraction", prep_cfg.train_fraction, "train split fraction");
    prep_keys.add(prep_cmd, "dx_prefix", prep_cfg.collapse.dx_prefix, "icd9_dx collapse length");
    prep_keys.add(prep_cmd, "dx_ecode_prefix", prep_cfg.collapse.dx_ecode_prefix, "icd9_dx E-code collapse length");
    prep_keys.add(prep_cmd, "proc_prefix", prep_cfg.collapse.proc_prefix, "icd9_proc collapse length");
    prep_keys.add(prep_cmd, "cpt_prefix", prep_cfg.collapse.cpt_prefix, "cpt collapse length");
    prep_keys.add(prep_cmd, "vocab_out", prep_vocab_out, "output vocabulary JSON");
    prep_keys.add(prep_cmd, "codes_out", prep_codes_out, "output code space JSON");
    prep_keys.add(prep_cmd, "dataset_out", prep_dataset_out, "output encoded dataset JSONL");

    // pretrain
    auto* pre_cmd = app.add_subcommand("pretrain", "CBOW embeddings with negative sampling");
    pre_cmd->fallthrough();
    KeyBinder pre_keys;
    prep::CbowConfig cbow_cfg;
    std::string pre_dataset, pre_embeddings_out, pre_text_out, pre_vocab;
    pre_keys.add(pre_cmd, "dataset", pre_dataset, "encoded dataset JSONL");
    pre_keys.add(pre_cmd, "window", cbow_cfg.window, "context window");
    pre_keys.add(pre_cmd, "dim", cbow_cfg.dim, "embedding dimension");
    pre_keys.add(pre_cmd, "negatives", cbow_cfg.negatives, "negative samples per target");
    pre_keys.add(pre_cmd, "epochs", cbow_cfg.epochs, "training epochs");
    pre_keys.add(pre_cmd, "learning_rate", cbow_cfg.learning_rate, "initial learning rate");
    pre_keys.add(pre_cmd, "min_learning_rate", cbow_cfg.min_learning_rate, "final learning rate");
    pre_keys.add(pre_cmd, "unigram_power", cbow_cfg.unigram_power, "negative-table exponent");
    pre_keys.add(pre_cmd, "embeddings_out", pre_embeddings_out, "output embedding checkpoint");
    pre_keys.add(pre_cmd, "text_out", pre_text_out, "optional text dump of embeddings");
    pre_keys.add(pre_cmd, "vocab", pre_vocab, "vocabulary JSON (needed for text_out)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the deep averaging network on billing codes");
    train_cmd->fallthrough();
    KeyBinder train_keys;
    prep::DanConfig dan_cfg;
    std::string train_dataset, train_init_embeddings, train_model_out, train_log_out;
    std::string train_activation = "rectifier";
    bool train_retrain = false;
    train_keys.add(train_cmd, "dataset", train_dataset, "encoded dataset JSONL");
    train_keys.add(train_cmd, "init_embeddings", train_init_embeddings, "optional CBOW checkpoint");
    CLI::Option* embed_dim_opt =
        train_keys.add(train_cmd, "embed_dim", dan_cfg.embed_dim, "embedding dimension");
    train_keys.add(train_cmd, "hidden_dim", dan_cfg.hidden_dim, "hidden layer width");
    train_keys.add(train_cmd, "learning_rate", dan_cfg.learning_rate, "RMSProp learning rate");
    train_keys.add(train_cmd, "epochs", dan_cfg.epochs, "training epochs");
    train_keys.add(train_cmd, "batch_size", dan_cfg.batch_size, "mini-batch size");
    train_keys.add(train_cmd, "rmsprop_decay", dan_cfg.rmsprop_decay, "RMSProp decay rho");
    train_keys.add(train_cmd, "rmsprop_epsilon", dan_cfg.rmsprop_epsilon, "RMSProp epsilon");
    train_keys.add(train_cmd, "sigmoid_threshold", dan_cfg.sigmoid_threshold, "binarization threshold");
    train_keys.add(train_cmd, "hidden_activation", train_activation, "rectifier or tanh");
    train_keys.add_flag(train_cmd, "retrain", train_retrain, "train on train+validation combined");
    train_keys.add(train_cmd, "model_out", train_model_out, "output DAN checkpoint");
    train_keys.add(train_cmd, "log_out", train_log_out, "output epoch log JSONL");

    // harvest
    auto* harvest_cmd = app.add_subcommand("harvest", "push a corpus through a frozen DAN, emit hidden vectors");
    harvest_cmd->fallthrough();
    KeyBinder harvest_keys;
    std::string harvest_model, harvest_corpus, harvest_vocab, harvest_vectors_out;
    harvest_keys.add(harvest_cmd, "model", harvest_model, "DAN checkpoint");
    harvest_keys.add(harvest_cmd, "corpus", harvest_corpus, "target corpus JSONL");
    harvest_keys.add(harvest_cmd, "vocab", harvest_vocab, "vocabulary the model was trained on");
    harvest_keys.add(harvest_cmd, "vectors_out", harvest_vectors_out, "output vectors JSONL");

    // svd
    auto* svd_cmd = app.add_subcommand("svd", "fit truncated SVD and/or project a corpus");
    svd_cmd->fallthrough();
    KeyBinder svd_keys;
    std::string svd_dataset, svd_factor_out, svd_factor_in, svd_corpus, svd_vocab, svd_vectors_out;
    uint32_t svd_k = 1000;
    bool svd_binary = false;
    svd_keys.add(svd_cmd, "dataset", svd_dataset, "encoded dataset to factorize");
    svd_keys.add(svd_cmd, "k", svd_k, "number of singular values kept");
    svd_keys.add_flag(svd_cmd, "binary", svd_binary, "binary presence matrix instead of counts");
    svd_keys.add(svd_cmd, "factor_out", svd_factor_out, "output factorization checkpoint");
    svd_keys.add(svd_cmd, "factor", svd_factor_in, "existing factorization checkpoint (projection mode)");
    svd_keys.add(svd_cmd, "corpus", svd_corpus, "corpus to project");
    svd_keys.add(svd_cmd, "vocab", svd_vocab, "vocabulary of the fitted matrix");
    svd_keys.add(svd_cmd, "vectors_out", svd_vectors_out, "output projected vectors JSONL");

    // classify
    auto* cls_cmd = app.add_subcommand("classify", "train one-vs-all SVMs and predict labels");
    cls_cmd->fallthrough();
    KeyBinder cls_keys;
    prep::SvmConfig svm_cfg;
    std::string cls_vectors, cls_corpus, cls_vocab, cls_labels, cls_predictions_out, cls_model_out;
    std::vector<std::string> cls_label_set;
    bool cls_counts = false;
    cls_keys.add(cls_cmd, "vectors", cls_vectors, "dense feature vectors JSONL");
    cls_keys.add(cls_cmd, "corpus", cls_corpus, "raw corpus for sparse bag-of-CUIs features");
    cls_keys.add(cls_cmd, "vocab", cls_vocab, "vocabulary for sparse features");
    cls_keys.add_flag(cls_cmd, "counts", cls_counts, "sparse features as counts instead of presence");
    cls_keys.add(cls_cmd, "labels", cls_labels, "training labels JSONL");
    cls_keys.add(cls_cmd, "label_set", cls_label_set, "explicit class list (default: observed)");
    cls_keys.add(cls_cmd, "C", svm_cfg.C, "SVM regularization trade-off");
    cls_keys.add(cls_cmd, "tolerance", svm_cfg.tolerance, "projected-gradient stopping tolerance");
    cls_keys.add(cls_cmd, "max_sweeps", svm_cfg.max_sweeps, "sweep cap");
    cls_keys.add(cls_cmd, "predictions_out", cls_predictions_out, "output predictions JSONL");
    cls_keys.add(cls_cmd, "model_out", cls_model_out, "optional output SVM checkpoint");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "macro P/R/F1 report and significance test");
    eval_cmd->fallthrough();
    KeyBinder eval_keys;
    std::string eval_gold, eval_report_out, eval_table_out, eval_task = "phenotype";
    std::vector<std::string> eval_predictions, eval_label_set;
    eval_keys.add(eval_cmd, "gold", eval_gold, "gold labels JSONL");
    eval_keys.add(eval_cmd, "predictions", eval_predictions, "name=path, repeatable, one per system");
    eval_keys.add(eval_cmd, "label_set", eval_label_set, "explicit label set (default: union observed)");
    eval_keys.add(eval_cmd, "task_name", eval_task, "row name in the report table");
    eval_keys.add(eval_cmd, "report_out", eval_report_out, "output report JSON");
    eval_keys.add(eval_cmd, "table_out", eval_table_out, "output aligned text table");

    CLI11_PARSE(app, argc, argv);

    try {
        json config = json::object();
        if (!config_path.empty()) {
            config = json::parse(prep::read_text_file(config_path));
            if (!config.is_object()) throw std::runtime_error(config_path + ": config must be a JSON object");
        }
        auto resolve_seed = [&](uint64_t& into) {
            if (seed_opt->count() > 0) into = global_seed;
            else if (config.contains("seed")) into = config.at("seed").get<uint64_t>();
        };

        if (synth_cmd->parsed()) {
            synth_keys.apply_config(config);
            resolve_seed(synth_cfg.seed);
            require_path(synth_corpus_out, "corpus_out");
            require_path(synth_labels_out, "labels_out");
            const prep::SynthResult result = prep::generate(synth_cfg);
            prep::save_corpus(synth_corpus_out, result.corpus);
            prep::write_labels(synth_labels_out, result.labels);
            std::cerr << "synth: " << result.corpus.size() << " patients -> " << synth_corpus_out << "\n";
        } else if (prep_cmd->parsed()) {
            prep_keys.apply_config(config);
            resolve_seed(prep_cfg.seed);
            require_path(prep_corpus, "corpus");
            require_path(prep_vocab_out, "vocab_out");
            require_path(prep_codes_out, "codes_out");
            require_path(prep_dataset_out, "dataset_out");
            const auto corpus = prep::load_corpus(prep_corpus);
            const prep::PreprocessResult result = prep::preprocess(corpus, prep_cfg);
            result.vocab.save(prep_vocab_out);
            result.codes.save(prep_codes_out);
            result.dataset.save(prep_dataset_out);
            std::cerr << "preprocess: kept " << result.dataset.patients.size() << " of " << corpus.size()
                      << " patients, vocab " << result.vocab.size() << ", codes " << result.codes.size()
                      << "\n";
        } else if (pre_cmd->parsed()) {
            pre_keys.apply_config(config);
            resolve_seed(cbow_cfg.seed);
            require_path(pre_dataset, "dataset");
            require_path(pre_embeddings_out, "embeddings_out");
            const prep::EncodedDataset ds = prep::EncodedDataset::load(pre_dataset);
            const prep::CbowTrainResult result = prep::train_cbow(ds, cbow_cfg);
            prep::to_checkpoint(result.model, ds.vocab_hash, cbow_cfg).save(pre_embeddings_out);
            for (size_t e = 0; e < result.epoch_mean_loss.size(); ++e)
                std::cerr << "pretrain: epoch " << e + 1 << " mean loss " << result.epoch_mean_loss[e]
                          << "\n";
            if (!pre_text_out.empty()) {
                require_path(pre_vocab, "vocab");
                const prep::Vocabulary vocab = prep::Vocabulary::load(pre_vocab);
                require_hash_match(ds.vocab_hash, vocab.hash(), "vocabulary file");
                prep::save_embeddings_text(pre_text_out, result.model.input, vocab);
            }
        } else if (train_cmd->parsed()) {
            train_keys.apply_config(config);
            resolve_seed(dan_cfg.seed);
            require_path(train_dataset, "dataset");
            require_path(train_model_out, "model_out");
            dan_cfg.hidden_activation = prep::activation_from_string(train_activation);
            const prep::EncodedDataset ds = prep::EncodedDataset::load(train_dataset);

            std::optional<prep::DenseMatrix> pretrained;
            if (!train_init_embeddings.empty()) {
                const prep::Checkpoint ckpt = prep::Checkpoint::load(train_init_embeddings);
                const prep::CbowModel cbow = prep::cbow_from_checkpoint(ckpt);
                require_hash_match(ckpt.vocab_hash, ds.vocab_hash, "encoded dataset");
                const bool dim_given = embed_dim_opt->count() > 0 || config.contains("embed_dim");
                if (dim_given && dan_cfg.embed_dim != cbow.dim())
                    throw std::runtime_error("embed_dim " + std::to_string(dan_cfg.embed_dim) +
                                             " does not match pretrained embedding dimension " +
                                             std::to_string(cbow.dim()));
                dan_cfg.embed_dim = cbow.dim();
                pretrained = cbow.input;
            }

            const prep::DanTrainResult result = prep::train_dan(ds, dan_cfg, pretrained, train_retrain);
            prep::to_checkpoint(result.model, ds.vocab_hash).save(train_model_out);
            if (!train_log_out.empty()) {
                std::ofstream log = prep::open_output(train_log_out);
                for (const auto& entry : result.log) {
                    json line{{"epoch", entry.epoch}, {"mean_train_loss", entry.mean_train_loss}};
                    line["val_macro_f1"] =
                        std::isnan(entry.val_macro_f1) ? json(nullptr) : json(entry.val_macro_f1);
                    log << line.dump() << "\n";
                }
            }
            if (!result.log.empty())
                std::cerr << "train: final mean loss " << result.log.back().mean_train_loss
                          << ", val macro-F1 " << result.log.back().val_macro_f1 << "\n";
        } else if (harvest_cmd->parsed()) {
            harvest_keys.apply_config(config);
            require_path(harvest_model, "model");
            require_path(harvest_corpus, "corpus");
            require_path(harvest_vocab, "vocab");
            require_path(harvest_vectors_out, "vectors_out");
            const prep::Checkpoint ckpt = prep::Checkpoint::load(harvest_model);
            const prep::DanModel model = prep::dan_from_checkpoint(ckpt);
            const EncodedTarget target = encode_target(harvest_vocab, harvest_corpus);
            require_hash_match(ckpt.vocab_hash, target.vocab.hash(), "vocabulary file");
            std::vector<std::pair<std::string, prep::Vector>> vectors;
            vectors.reserve(target.patient_ids.size());
            for (size_t i = 0; i < target.patient_ids.size(); ++i)
                vectors.emplace_back(target.patient_ids[i],
                                     prep::harvest(model, target.encodings[i].unique_cuis));
            prep::write_vectors(harvest_vectors_out, vectors);
            std::cerr << "harvest: " << vectors.size() << " vectors of dim " << model.hidden_dim()
                      << " -> " << harvest_vectors_out << "\n";
        } else if (svd_cmd->parsed()) {
            svd_keys.apply_config(config);
            uint64_t svd_seed = 0;
            resolve_seed(svd_seed);
            std::optional<prep::SvdFactorization> fact;
            uint64_t fact_hash = 0;
            bool fact_binary = svd_binary;
            if (!svd_dataset.empty()) {
                require_path(svd_factor_out, "factor_out");
                const prep::EncodedDataset ds = prep::EncodedDataset::load(svd_dataset);
                std::vector<uint32_t> all(ds.patients.size());
                for (uint32_t i = 0; i < all.size(); ++i) all[i] = i;
                const prep::SparseMatrix m = prep::patient_cui_matrix(ds, all, svd_binary);
                fact = prep::fit_truncated_svd(m, svd_k, svd_seed);
                fact_hash = ds.vocab_hash;
                prep::Checkpoint ckpt = prep::to_checkpoint(*fact, fact_hash);
                ckpt.meta["binary"] = svd_binary ? "1" : "0";
                ckpt.save(svd_factor_out);
                std::cerr << "svd: top singular value " << fact->singular_values.front() << ", k=" << fact->k
                          << " -> " << svd_factor_out << "\n";
            } else if (!svd_factor_in.empty()) {
                const prep::Checkpoint ckpt = prep::Checkpoint::load(svd_factor_in);
                fact = prep::svd_from_checkpoint(ckpt);
                fact_hash = ckpt.vocab_hash;
                fact_binary = ckpt.meta.count("binary") != 0 && ckpt.meta.at("binary") == "1";
            }
            if (!svd_corpus.empty()) {
                if (!fact) throw std::runtime_error("projection needs --dataset or --factor");
                require_path(svd_vocab, "vocab");
                require_path(svd_vectors_out, "vectors_out");
                const EncodedTarget target = encode_target(svd_vocab, svd_corpus);
                require_hash_match(fact_hash, target.vocab.hash(), "vocabulary file");
                std::vector<std::pair<std::string, prep::Vector>> vectors;
                vectors.reserve(target.patient_ids.size());
                for (size_t i = 0; i < target.patient_ids.size(); ++i) {
                    prep::Vector x(target.vocab.size(), 0.0);
                    const auto& enc = target.encodings[i];
                    for (size_t e = 0; e < enc.unique_cuis.size(); ++e)
                        x[enc.unique_cuis[e]] = fact_binary ? 1.0 : static_cast<double>(enc.cui_counts[e]);
                    vectors.emplace_back(target.patient_ids[i], prep::project(*fact, x));
                }
                prep::write_vectors(svd_vectors_out, vectors);
                std::cerr << "svd: projected " << vectors.size() << " patients -> " << svd_vectors_out
                          << "\n";
            } else if (svd_dataset.empty()) {
                throw std::runtime_error("svd: nothing to do (need --dataset to fit and/or --corpus to project)");
            }
        } else if (cls_cmd->parsed()) {
            cls_keys.apply_config(config);
            resolve_seed(svm_cfg.seed);
            require_path(cls_labels, "labels");
            require_path(cls_predictions_out, "predictions_out");
            const bool dense_arm = !cls_vectors.empty();
            const bool sparse_arm = !cls_corpus.empty();
            if (dense_arm == sparse_arm)
                throw std::runtime_error("classify: give exactly one of --vectors or --corpus (+--vocab)");

            prep::SvmProblem problem;
            std::vector<std::string> ids;
            uint64_t vocab_hash = 0;
            std::string feature_space;
            if (dense_arm) {
                feature_space = "dense";
                const auto rows = prep::read_vectors(cls_vectors);
                if (rows.empty()) throw std::runtime_error(cls_vectors + ": no vectors");
                prep::DenseMatrix m(rows.size(), rows.front().second.size());
                for (size_t i = 0; i < rows.size(); ++i) {
                    if (rows[i].second.size() != m.cols)
                        throw std::runtime_error(cls_vectors + ": inconsistent vector lengths");
                    std::copy(rows[i].second.begin(), rows[i].second.end(), m.row(i));
                    ids.push_back(rows[i].first);
                }
                problem = prep::SvmProblem::from_dense(m);
            } else {
                feature_space = "sparse";
                require_path(cls_vocab, "vocab");
                const EncodedTarget target = encode_target(cls_vocab, cls_corpus);
                problem = problem_from_encodings(target, cls_counts);
                ids = target.patient_ids;
                vocab_hash = target.vocab.hash();
            }

            std::map<std::string, std::string> label_by_id;
            for (const auto& [id, phen] : prep::read_labels(cls_labels)) label_by_id[id] = phen;
            prep::SvmProblem train_problem;
            train_problem.num_features = problem.num_features;
            std::vector<std::string> train_labels;
            for (size_t i = 0; i < ids.size(); ++i) {
                auto it = label_by_id.find(ids[i]);
                if (it == label_by_id.end()) continue;
                train_problem.rows.push_back(problem.rows[i]);
                train_labels.push_back(it->second);
            }
            if (train_labels.empty())
                throw std::runtime_error("classify: no feature patient appears in " + cls_labels);
            std::cerr << "classify: training on " << train_labels.size() << " of " << ids.size()
                      << " patients\n";

            const prep::OneVsAllModel model =
                prep::train_one_vs_all(train_problem, train_labels, svm_cfg, cls_label_set, threads);
            if (!cls_model_out.empty())
                prep::to_checkpoint(model, vocab_hash, feature_space).save(cls_model_out);

            std::vector<std::pair<std::string, std::string>> predictions;
            predictions.reserve(ids.size());
            for (size_t i = 0; i < ids.size(); ++i)
                predictions.emplace_back(ids[i], prep::predict_label(model, problem.rows[i]));
            prep::write_labels(cls_predictions_out, predictions);
        } else if (eval_cmd->parsed()) {
            eval_keys.apply_config(config);
            require_path(eval_gold, "gold");
            if (eval_predictions.empty())
                throw std::runtime_error("evaluate: need at least one --predictions name=path");

            const auto gold_rows = prep::read_labels(eval_gold);
            if (gold_rows.empty()) throw std::runtime_error(eval_gold + ": no gold labels");
            std::vector<std::string> gold;
            for (const auto& [id, phen] : gold_rows) gold.push_back(phen);

            struct System {
                std::string name;
                std::vector<std::string> pred;
            };
            std::vector<System> systems;
            for (const auto& spec : eval_predictions) {
                const size_t eq = spec.find('=');
                System sys;
                std::string path;
                if (eq == std::string::npos) {
                    sys.name = "system" + std::to_string(systems.size() + 1);
                    path = spec;
                } else {
                    sys.name = spec.substr(0, eq);
                    path = spec.substr(eq + 1);
                }
                std::map<std::string, std::string> by_id;
                for (const auto& [id, phen] : prep::read_labels(path)) by_id[id] = phen;
                for (const auto& [id, phen] : gold_rows) {
                    auto it = by_id.find(id);
                    if (it == by_id.end())
                        throw std::runtime_error(path + ": missing prediction for patient " + id);
                    sys.pred.push_back(it->second);
                }
                systems.push_back(std::move(sys));
            }

            std::vector<std::string> label_set = eval_label_set;
            if (label_set.empty()) {
                label_set.assign(gold.begin(), gold.end());
                for (const auto& sys : systems)
                    label_set.insert(label_set.end(), sys.pred.begin(), sys.pred.end());
                std::sort(label_set.begin(), label_set.end());
                label_set.erase(std::unique(label_set.begin(), label_set.end()), label_set.end());
            }

            json report{{"task", eval_task}, {"systems", json::array()}};
            std::vector<prep::SystemScores> table_systems;
            std::vector<prep::EvalReport> reports;
            for (const auto& sys : systems) {
                const prep::EvalReport r = prep::macro_prf(gold, sys.pred, label_set);
                json entry = metrics_json(r);
                entry["name"] = sys.name;
                report["systems"].push_back(std::move(entry));
                table_systems.push_back(
                    {sys.name, {r.macro_precision}, {r.macro_recall}, {r.macro_f1}});
                reports.push_back(r);
            }

            std::string table = prep::render_results_table({eval_task}, table_systems);
            if (systems.size() >= 2) {
                std::vector<double> f1_a, f1_b;
                for (const auto& m : reports[0].per_label) f1_a.push_back(m.f1);
                for (const auto& m : reports[1].per_label) f1_b.push_back(m.f1);
                try {
                    const prep::TTestResult tt = prep::paired_t_test(f1_a, f1_b);
                    report["t_test"] = json{{"a", systems[0].name}, {"b", systems[1].name},
                                            {"t", tt.t},           {"p", tt.p},
                                            {"df", tt.df}};
                    std::ostringstream line;
                    line << "paired t-test (" << systems[0].name << " vs " << systems[1].name
                         << ", per-label F1): t=" << std::fixed << std::setprecision(4) << tt.t
                         << ", p=" << tt.p << ", df=" << tt.df << "\n";
                    table += line.str();
                } catch (const std::exception& e) {
                    report["t_test_skipped"] = e.what();
                    table += std::string("paired t-test skipped: ") + e.what() + "\n";
                }
            }

            std::cout << table;
            if (!eval_table_out.empty()) prep::write_text_file(eval_table_out, table);
            if (!eval_report_out.empty()) prep::write_text_file(eval_report_out, report.dump(1) + "\n");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
