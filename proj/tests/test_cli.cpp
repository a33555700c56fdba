#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prep/corpus.hpp"
#include "prep/io.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) { return std::system((std::string(PREP_CLI) + " " + args).c_str()); }

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::current_path() / "cli_scratch";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("missing required outputs are reported", "[cli]") {
    CHECK(run("synth > /dev/null 2>&1") != 0);
    const fs::path err = scratch() / "missing.err";
    REQUIRE(run("synth --num_patients 5 > /dev/null 2> " + q(err)) != 0);
    const std::string text = prep::read_text_file(err.string());
    CHECK(text.find("corpus_out") != std::string::npos);
}

TEST_CASE("config files supply keys and flags override them", "[cli]") {
    const fs::path dir = scratch();
    const fs::path cfg_path = dir / "synth.json";
    const fs::path from_cfg = dir / "from_cfg.jsonl";
    prep::json cfg{{"num_patients", 50},
                   {"seed", 9},
                   {"corpus_out", from_cfg.string()},
                   {"labels_out", (dir / "from_cfg_labels.jsonl").string()}};
    prep::write_text_file(cfg_path.string(), cfg.dump());

    REQUIRE(run("synth --config " + q(cfg_path) + " > /dev/null 2>&1") == 0);
    CHECK(line_count(from_cfg) == 50);

    // the flag wins over the config key
    const fs::path overridden = dir / "overridden.jsonl";
    REQUIRE(run("synth --config " + q(cfg_path) + " --num_patients 30 --corpus_out " + q(overridden) +
                " --labels_out " + q(dir / "overridden_labels.jsonl") + " > /dev/null 2>&1") == 0);
    CHECK(line_count(overridden) == 30);

    // seed flag beats the config seed: different corpus content
    const fs::path reseeded = dir / "reseeded.jsonl";
    REQUIRE(run("synth --config " + q(cfg_path) + " --seed 10 --corpus_out " + q(reseeded) +
                " --labels_out " + q(dir / "reseeded_labels.jsonl") + " > /dev/null 2>&1") == 0);
    CHECK(line_count(reseeded) == 50);
    CHECK(prep::read_text_file(reseeded.string()) != prep::read_text_file(from_cfg.string()));
}

TEST_CASE("evaluate scores identical predictions as perfect", "[cli]") {
    const fs::path dir = scratch();
    const std::vector<std::pair<std::string, std::string>> labels{
        {"p1", "present"}, {"p2", "absent"}, {"p3", "questionable"}, {"p4", "absent"}};
    const fs::path gold = dir / "gold.jsonl";
    const fs::path pred = dir / "pred.jsonl";
    prep::write_labels(gold.string(), labels);
    prep::write_labels(pred.string(), labels);

    const fs::path report = dir / "identity_report.json";
    REQUIRE(run("evaluate --gold " + q(gold) + " --predictions copy=" + q(pred) + " --report_out " +
                q(report) + " > /dev/null 2>&1") == 0);
    const auto doc = prep::json::parse(prep::read_text_file(report.string()));
    REQUIRE(doc.at("systems").size() == 1);
    CHECK(doc.at("systems")[0].at("name").get<std::string>() == "copy");
    CHECK(doc.at("systems")[0].at("macro_f1").get<double>() == 1.0);
    CHECK(doc.at("systems")[0].at("macro_precision").get<double>() == 1.0);
}

TEST_CASE("harvest refuses a vocabulary the model was not trained on", "[cli]") {
    const fs::path dir = scratch();
    auto p = [&](const char* name) { return q(dir / name); };

    REQUIRE(run("synth --seed 3 --num_patients 40 --corpus_out " + p("hm_src.jsonl") +
                " --labels_out " + p("hm_labels.jsonl") + " > /dev/null 2>&1") == 0);
    REQUIRE(run("preprocess --seed 3 --corpus " + p("hm_src.jsonl") +
                " --cui_min_freq 1 --code_min_patients 1 --vocab_out " + p("hm_vocab.json") +
                " --codes_out " + p("hm_codes.json") + " --dataset_out " + p("hm_dataset.jsonl") +
                " > /dev/null 2>&1") == 0);
    REQUIRE(run("preprocess --seed 3 --corpus " + p("hm_src.jsonl") +
                " --cui_min_freq 4 --code_min_patients 1 --vocab_out " + p("hm_vocab_other.json") +
                " --codes_out " + p("hm_codes_other.json") + " --dataset_out " +
                p("hm_dataset_other.jsonl") + " > /dev/null 2>&1") == 0);
    REQUIRE(run("train --seed 3 --dataset " + p("hm_dataset.jsonl") +
                " --embed_dim 4 --hidden_dim 4 --epochs 1 --batch_size 10 --model_out " +
                p("hm_dan.ckpt") + " > /dev/null 2>&1") == 0);

    const prep::Vocabulary a = prep::Vocabulary::load((dir / "hm_vocab.json").string());
    const prep::Vocabulary b = prep::Vocabulary::load((dir / "hm_vocab_other.json").string());
    REQUIRE(a.hash() != b.hash());  // otherwise the mismatch scenario is vacuous

    const fs::path err = dir / "hm.err";
    REQUIRE(run("harvest --model " + p("hm_dan.ckpt") + " --corpus " + p("hm_src.jsonl") + " --vocab " +
                p("hm_vocab_other.json") + " --vectors_out " + p("hm_vectors.jsonl") + " > /dev/null 2> " +
                q(err)) != 0);
    const std::string text = prep::read_text_file(err.string());
    CHECK(text.find("mismatch") != std::string::npos);
    CHECK(text.find("0x") != std::string::npos);
    CHECK(text.find("0x") != text.rfind("0x"));  // both hashes printed

    // matching vocabulary goes through
    CHECK(run("harvest --model " + p("hm_dan.ckpt") + " --corpus " + p("hm_src.jsonl") + " --vocab " +
              p("hm_vocab.json") + " --vectors_out " + p("hm_vectors.jsonl") + " > /dev/null 2>&1") == 0);
    CHECK(line_count(dir / "hm_vectors.jsonl") == 40);
}

TEST_CASE("unknown subcommand fails", "[cli]") {
    CHECK(run("frobnicate > /dev/null 2>&1") != 0);
}
