#ifndef PREP_IO_HPP
#define PREP_IO_HPP

#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prep/matrix.hpp"

namespace prep {

using json = nlohmann::json;

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open input file: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    return out;
}

// Calls fn(line_number, parsed_object) for every non-empty line. Line numbers
// are 1-based; parse failures report the offending line.
inline void for_each_jsonl(const std::string& path, const std::function<void(size_t, const json&)>& fn) {
    std::ifstream in = open_input(path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed JSON line");
        fn(line_no, obj);
    }
}

// Labels / predictions file: one {"patient_id", "phenotype"} object per line.
inline std::vector<std::pair<std::string, std::string>> read_labels(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> out;
    for_each_jsonl(path, [&](size_t line_no, const json& obj) {
        if (!obj.contains("patient_id") || !obj.contains("phenotype"))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected patient_id and phenotype fields");
        out.emplace_back(obj.at("patient_id").get<std::string>(), obj.at("phenotype").get<std::string>());
    });
    return out;
}

inline void write_labels(const std::string& path,
                         const std::vector<std::pair<std::string, std::string>>& labels) {
    std::ofstream out = open_output(path);
    for (const auto& [id, label] : labels) {
        json obj{{"patient_id", id}, {"phenotype", label}};
        out << obj.dump() << "\n";
    }
}

// Vectors file: one {"patient_id", "vector"} object per line.
inline std::vector<std::pair<std::string, Vector>> read_vectors(const std::string& path) {
    std::vector<std::pair<std::string, Vector>> out;
    for_each_jsonl(path, [&](size_t line_no, const json& obj) {
        if (!obj.contains("patient_id") || !obj.contains("vector"))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected patient_id and vector fields");
        out.emplace_back(obj.at("patient_id").get<std::string>(), obj.at("vector").get<Vector>());
    });
    return out;
}

inline void write_vectors(const std::string& path,
                          const std::vector<std::pair<std::string, Vector>>& vectors) {
    std::ofstream out = open_output(path);
    for (const auto& [id, vec] : vectors) {
        json obj{{"patient_id", id}, {"vector", vec}};
        out << obj.dump() << "\n";
    }
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out = open_output(path);
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in = open_input(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace prep

#endif
