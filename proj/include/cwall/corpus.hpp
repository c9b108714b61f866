#pragma once

// Benchmark corpus: one JSON record per line, loaded into immutable Problem
// values. Gold validation runs a problem's expected code against its tests.

#include <array>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cwall/executor.hpp"
#include "cwall/lang.hpp"
#include "cwall/sha256.hpp"
#include "cwall/util.hpp"

namespace cwall {

enum class PromptVariant { descriptive, lazy };

inline std::string to_string(PromptVariant v) {
    return v == PromptVariant::descriptive ? "descriptive" : "lazy";
}

inline PromptVariant prompt_variant_from_string(const std::string& s) {
    if (s == "descriptive") return PromptVariant::descriptive;
    if (s == "lazy") return PromptVariant::lazy;
    throw FormatError("unknown prompt variant: '" + s + "'");
}

constexpr std::array<PromptVariant, 2> kAllVariants = {PromptVariant::descriptive,
                                                       PromptVariant::lazy};

struct Problem {
    std::string id;
    std::string name;
    std::string before_code;
    std::string after_code;
    std::string test_suite;
    std::string instruction_descriptive;
    std::string instruction_lazy;
    SubjectLanguage subject_language = SubjectLanguage::python;

    const std::string& instruction(PromptVariant v) const {
        return v == PromptVariant::descriptive ? instruction_descriptive : instruction_lazy;
    }
    // Problems without tests can be annotated and edited but never scored.
    bool evaluable() const { return !trim(test_suite).empty(); }

    bool operator==(const Problem&) const = default;
};

namespace detail {

inline std::string require_string_field(const nlohmann::json& rec, const char* field,
                                        size_t record_index) {
    if (!rec.contains(field) || !rec.at(field).is_string()) {
        throw FormatError("corpus record " + std::to_string(record_index) +
                          ": missing or non-string field \"" + field + "\"");
    }
    return rec.at(field).get<std::string>();
}

}  // namespace detail

inline Problem problem_from_json(const nlohmann::json& rec, size_t record_index) {
    Problem p;
    p.id = detail::require_string_field(rec, "id", record_index);
    p.name = detail::require_string_field(rec, "name", record_index);
    p.before_code = detail::require_string_field(rec, "before_code", record_index);
    p.after_code = detail::require_string_field(rec, "after_code", record_index);
    p.test_suite = detail::require_string_field(rec, "test_suite", record_index);
    p.instruction_descriptive =
        detail::require_string_field(rec, "instruction_descriptive", record_index);
    p.instruction_lazy = detail::require_string_field(rec, "instruction_lazy", record_index);
    if (rec.contains("subject_language"))
        p.subject_language =
            subject_language_from_string(rec.at("subject_language").get<std::string>());
    if (p.before_code == p.after_code)
        throw FormatError("corpus record " + std::to_string(record_index) + " (id '" + p.id +
                          "'): before_code equals after_code, no edit required");
    return p;
}

inline nlohmann::ordered_json problem_to_json(const Problem& p) {
    nlohmann::ordered_json rec;
    rec["id"] = p.id;
    rec["name"] = p.name;
    rec["before_code"] = p.before_code;
    rec["after_code"] = p.after_code;
    rec["test_suite"] = p.test_suite;
    rec["instruction_descriptive"] = p.instruction_descriptive;
    rec["instruction_lazy"] = p.instruction_lazy;
    rec["subject_language"] = to_string(p.subject_language);
    return rec;
}

inline std::vector<Problem> parse_corpus(const std::string& content, const std::string& origin) {
    std::vector<Problem> problems;
    std::set<std::string> seen_ids;
    size_t index = 0;
    for (const auto& line : split_lines(content)) {
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(origin + ": record " + std::to_string(index) + ": invalid JSON: " +
                              e.what());
        }
        Problem p = problem_from_json(rec, index);
        if (!seen_ids.insert(p.id).second)
            throw FormatError(origin + ": duplicate problem id '" + p.id + "'");
        problems.push_back(std::move(p));
        ++index;
    }
    return problems;
}

inline std::vector<Problem> load_corpus(const fs::path& path) {
    return parse_corpus(read_file(path), path.string());
}

inline std::string serialize_corpus(const std::vector<Problem>& problems) {
    std::string out;
    for (const auto& p : problems) {
        out += problem_to_json(p).dump();
        out += '\n';
    }
    return out;
}

inline void save_corpus(const std::vector<Problem>& problems, const fs::path& path) {
    write_file(path, serialize_corpus(problems));
}

inline std::string corpus_digest(const std::string& corpus_bytes) {
    return sha256_hex(corpus_bytes);
}

struct GoldReport {
    bool passed = false;
    ExecutionOutcome outcome;
};

// Checks that the shipped after_code actually satisfies the problem's tests.
// Environment trouble raises; a failing gold is reported, not thrown.
inline GoldReport validate_gold(const Problem& problem, std::chrono::milliseconds timeout,
                                const ExecConfig& cfg = ExecConfig{}) {
    GoldReport report;
    report.outcome =
        run_tests(problem.after_code, problem.test_suite, problem.subject_language, timeout, cfg);
    if (report.outcome.env_failure)
        throw EnvironmentError("gold validation for '" + problem.id +
                               "': " + report.outcome.diagnostic);
    report.passed = report.outcome.passed();
    return report;
}

}  // namespace cwall
