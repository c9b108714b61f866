#pragma once

// Evaluation metrics: the unbiased pass@k estimator, per-problem and
// aggregate folds, and the ExcessCode measure (changed lines the test suite
// never exercises).

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cwall/corpus.hpp"
#include "cwall/diff.hpp"
#include "cwall/executor.hpp"
#include "cwall/pipeline.hpp"
#include "cwall/util.hpp"

namespace cwall {

// P(at least one of k draws from n samples hits one of the c passing ones)
// = 1 - C(n-c, k)/C(n, k), evaluated as a running product so large n never
// overflows.
inline double pass_at_k(int n, int c, int k) {
    if (n < 1) throw ContractError("pass_at_k: n must be >= 1");
    if (c < 0 || c > n) throw ContractError("pass_at_k: c must be in [0, n]");
    if (k < 1 || k > n) throw ContractError("pass_at_k: k must be in [1, n]");
    if (n - c < k) return 1.0;
    double miss_all = 1.0;
    for (int i = 0; i < k; ++i) miss_all *= double(n - c - i) / double(n - i);
    return 1.0 - miss_all;
}

struct ProblemStats {
    std::string problem_id;
    PromptVariant variant = PromptVariant::descriptive;
    std::string editor_name;
    RunMode mode = RunMode::chinese_wall;
    int n = 0;
    int c = 0;
    // One value per passing sample that had coverage available.
    std::vector<double> excess_values;
};

// Mean per-problem pass@k, as a percentage. With equal n everywhere this
// equals both of the usual phrasings: total passes over total samples at
// k = 1, and the fraction of problems with any pass at k = n.
inline double aggregate_pass(const std::vector<ProblemStats>& stats, int k) {
    if (stats.empty()) throw ContractError("aggregate_pass: no stats to aggregate");
    for (const auto& s : stats) {
        if (s.editor_name != stats.front().editor_name || s.mode != stats.front().mode ||
            s.variant != stats.front().variant)
            throw ContractError("aggregate_pass: stats mix editors, modes or variants");
    }
    double sum = 0.0;
    for (const auto& s : stats) sum += pass_at_k(s.n, s.c, k);
    return sum / double(stats.size()) * 100.0;
}

// Changed lines in the edited code that are executable yet uncovered.
// Undefined (nullopt) when the outcome has no coverage data.
inline std::optional<double> excess_code(const std::string& before_code,
                                         const std::string& edited_code,
                                         const ExecutionOutcome& outcome) {
    if (!outcome.has_coverage()) return std::nullopt;
    int excess = 0;
    for (int line : changed_lines_in_edited(before_code, edited_code)) {
        if (outcome.executable_lines->count(line) && !outcome.covered_lines->count(line)) ++excess;
    }
    return double(excess);
}

struct MeanErr {
    std::optional<double> mean;
    std::optional<double> err;  // standard error of the mean
};

inline MeanErr aggregate_excess(const std::vector<double>& values) {
    MeanErr out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    double mean = sum / double(values.size());
    out.mean = mean;
    if (values.size() == 1) {
        out.err = 0.0;
        return out;
    }
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    double sd = std::sqrt(sq / double(values.size() - 1));
    out.err = sd / std::sqrt(double(values.size()));
    return out;
}

inline double improvement_percent(double baseline, double treated) {
    if (!(baseline > 0)) throw ContractError("improvement_percent: baseline must be > 0");
    return (treated - baseline) / baseline * 100.0;
}

// ---------------------------------------------------------------------------
// Folding attempts into stats and Table-2-shaped rows.

struct AggregateRow {
    std::string editor_name;
    RunMode mode = RunMode::chinese_wall;
    PromptVariant variant = PromptVariant::descriptive;
    std::string annotator_name;  // display only; empty in baseline rows
    double pass_at_1 = 0.0;
    double pass_at_20 = 0.0;
    int pass_k = 20;  // the "n" column: pass@n with n samples per problem
    MeanErr excess;
};

// Groups attempts by (editor, mode, variant, problem). An attempt counts as
// passing only when its outcome is pass; generation errors and missing
// outcomes count as failing samples. Excess values are taken from passing
// attempts with coverage.
inline std::vector<ProblemStats> build_problem_stats(const std::vector<EditAttempt>& attempts,
                                                     const std::vector<Problem>& corpus) {
    std::map<std::string, const Problem*> by_id;
    for (const auto& p : corpus) by_id[p.id] = &p;

    std::map<std::tuple<std::string, std::string, std::string, std::string>, ProblemStats> groups;
    for (const auto& a : attempts) {
        auto key = std::make_tuple(a.editor_name, to_string(a.mode), to_string(a.variant),
                                   a.problem_id);
        auto& stats = groups[key];
        if (stats.n == 0) {
            stats.problem_id = a.problem_id;
            stats.variant = a.variant;
            stats.editor_name = a.editor_name;
            stats.mode = a.mode;
        }
        stats.n += 1;
        bool passed = a.outcome.has_value() && a.outcome->passed();
        if (passed) {
            stats.c += 1;
            auto it = by_id.find(a.problem_id);
            if (it != by_id.end()) {
                auto excess = excess_code(it->second->before_code, a.extracted_code, *a.outcome);
                if (excess.has_value()) stats.excess_values.push_back(*excess);
            }
        }
    }
    std::vector<ProblemStats> out;
    out.reserve(groups.size());
    for (auto& [key, stats] : groups) out.push_back(std::move(stats));
    return out;
}

inline std::vector<AggregateRow> build_aggregate_rows(const std::vector<ProblemStats>& stats,
                                                      const std::string& annotator_name = "") {
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<ProblemStats>> groups;
    for (const auto& s : stats)
        groups[{s.editor_name, to_string(s.mode), to_string(s.variant)}].push_back(s);

    std::vector<AggregateRow> rows;
    for (auto& [key, group] : groups) {
        AggregateRow row;
        row.editor_name = group.front().editor_name;
        row.mode = group.front().mode;
        row.variant = group.front().variant;
        if (row.mode == RunMode::chinese_wall) row.annotator_name = annotator_name;
        int max_n = 0;
        for (const auto& s : group) max_n = std::max(max_n, s.n);
        row.pass_k = std::max(1, max_n);
        row.pass_at_1 = aggregate_pass(group, 1);
        double sum = 0.0;
        for (const auto& s : group) sum += pass_at_k(s.n, s.c, std::min(row.pass_k, s.n));
        row.pass_at_20 = sum / double(group.size()) * 100.0;
        std::vector<double> excess_values;
        for (const auto& s : group)
            excess_values.insert(excess_values.end(), s.excess_values.begin(),
                                 s.excess_values.end());
        row.excess = aggregate_excess(excess_values);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Stats (de)serialization for run directories.

inline nlohmann::ordered_json problem_stats_to_json(const ProblemStats& s) {
    nlohmann::ordered_json j;
    j["problem_id"] = s.problem_id;
    j["variant"] = to_string(s.variant);
    j["editor_name"] = s.editor_name;
    j["mode"] = to_string(s.mode);
    j["n"] = s.n;
    j["c"] = s.c;
    j["excess_values"] = s.excess_values;
    return j;
}

inline ProblemStats problem_stats_from_json(const nlohmann::json& j) {
    ProblemStats s;
    s.problem_id = j.at("problem_id").get<std::string>();
    s.variant = prompt_variant_from_string(j.at("variant").get<std::string>());
    s.editor_name = j.at("editor_name").get<std::string>();
    s.mode = run_mode_from_string(j.at("mode").get<std::string>());
    s.n = j.at("n").get<int>();
    s.c = j.at("c").get<int>();
    s.excess_values = j.at("excess_values").get<std::vector<double>>();
    return s;
}

}  // namespace cwall
