#pragma once

// Run artifacts: the manifest that pins what a run saw, the markdown results
// table, and the line-per-record exports that make metrics replayable.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cwall/metrics.hpp"
#include "cwall/pipeline.hpp"
#include "cwall/sha256.hpp"
#include "cwall/util.hpp"
#include "cwall/version.hpp"

namespace cwall {

struct RunManifest {
    std::string corpus_digest;
    std::string corpus_path;
    nlohmann::ordered_json backends = nlohmann::ordered_json::object();
    nlohmann::ordered_json editor_params = nlohmann::ordered_json::object();
    nlohmann::ordered_json annotator_params = nlohmann::ordered_json::object();
    std::vector<std::string> modes;
    std::vector<std::string> variants;
    int samples_per_problem = 20;
    int retry_max_tokens = 100000;
    int timeout_ms = 15000;
    std::string created_at;
    std::string harness_version = kHarnessVersion;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["corpus_digest"] = corpus_digest;
        j["corpus_path"] = corpus_path;
        j["backends"] = backends;
        j["editor_params"] = editor_params;
        j["annotator_params"] = annotator_params;
        j["modes"] = modes;
        j["variants"] = variants;
        j["samples_per_problem"] = samples_per_problem;
        j["retry_max_tokens"] = retry_max_tokens;
        j["timeout_ms"] = timeout_ms;
        j["created_at"] = created_at;
        j["harness_version"] = harness_version;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.corpus_digest = j.at("corpus_digest").get<std::string>();
        m.corpus_path = j.at("corpus_path").get<std::string>();
        m.backends = j.at("backends");
        m.editor_params = j.at("editor_params");
        m.annotator_params = j.at("annotator_params");
        m.modes = j.at("modes").get<std::vector<std::string>>();
        m.variants = j.at("variants").get<std::vector<std::string>>();
        m.samples_per_problem = j.at("samples_per_problem").get<int>();
        m.retry_max_tokens = j.at("retry_max_tokens").get<int>();
        m.timeout_ms = j.at("timeout_ms").get<int>();
        m.created_at = j.at("created_at").get<std::string>();
        m.harness_version = j.at("harness_version").get<std::string>();
        return m;
    }

    // Digest over everything except the timestamp, so a rerun over the same
    // inputs produces a byte-identical report.
    std::string stable_digest() const {
        auto j = to_json();
        j.erase("created_at");
        return sha256_hex(j.dump());
    }
};

inline nlohmann::ordered_json aggregate_row_to_json(const AggregateRow& row) {
    nlohmann::ordered_json j;
    j["editor_name"] = row.editor_name;
    j["mode"] = to_string(row.mode);
    j["variant"] = to_string(row.variant);
    if (!row.annotator_name.empty()) j["annotator_name"] = row.annotator_name;
    j["pass_at_1"] = row.pass_at_1;
    j["pass_at_k"] = row.pass_at_20;
    j["k"] = row.pass_k;
    if (row.excess.mean.has_value()) j["excess_mean"] = *row.excess.mean;
    if (row.excess.err.has_value()) j["excess_err"] = *row.excess.err;
    return j;
}

inline AggregateRow aggregate_row_from_json(const nlohmann::json& j) {
    AggregateRow row;
    row.editor_name = j.at("editor_name").get<std::string>();
    row.mode = run_mode_from_string(j.at("mode").get<std::string>());
    row.variant = prompt_variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("annotator_name")) row.annotator_name = j.at("annotator_name").get<std::string>();
    row.pass_at_1 = j.at("pass_at_1").get<double>();
    row.pass_at_20 = j.at("pass_at_k").get<double>();
    row.pass_k = j.at("k").get<int>();
    if (j.contains("excess_mean")) row.excess.mean = j.at("excess_mean").get<double>();
    if (j.contains("excess_err")) row.excess.err = j.at("excess_err").get<double>();
    return row;
}

namespace detail {

inline std::string row_label(const AggregateRow& row) {
    if (row.mode == RunMode::chinese_wall) {
        if (!row.annotator_name.empty()) return row.annotator_name + " + " + row.editor_name;
        return row.editor_name + " (chinese_wall)";
    }
    return row.editor_name;
}

inline std::string excess_cell(const MeanErr& excess) {
    if (!excess.mean.has_value()) return "—";
    return format_fixed2(*excess.mean) + " ± " + format_fixed2(excess.err.value_or(0.0));
}

}  // namespace detail

// Markdown table, one row per (editor, mode), variant columns side by side:
// pass@1, pass@k and ExcessCode under Descriptive, then under Lazy. Rows are
// ordered by descriptive pass@1, best first.
inline std::string render_table(const std::vector<AggregateRow>& rows) {
    if (rows.empty()) throw ContractError("render_table: rows must be non-empty");

    struct Entry {
        std::string label;
        std::map<PromptVariant, AggregateRow> by_variant;
    };
    std::map<std::string, Entry> grouped;
    int k = 1;
    for (const auto& row : rows) {
        std::string label = detail::row_label(row);
        auto& entry = grouped[label + "\x1f" + to_string(row.mode)];
        entry.label = label;
        entry.by_variant[row.variant] = row;
        k = std::max(k, row.pass_k);
    }

    std::vector<Entry> entries;
    for (auto& [key, entry] : grouped) entries.push_back(entry);
    auto descriptive_pass1 = [](const Entry& e) {
        auto it = e.by_variant.find(PromptVariant::descriptive);
        return it == e.by_variant.end() ? -1.0 : it->second.pass_at_1;
    };
    std::stable_sort(entries.begin(), entries.end(), [&](const Entry& x, const Entry& y) {
        double px = descriptive_pass1(x), py = descriptive_pass1(y);
        if (px != py) return px > py;
        return x.label < y.label;
    });

    std::string pk = "pass@" + std::to_string(k);
    std::string out;
    out += "| Model | Descriptive " + pk + " | | | Lazy " + pk + " | | |\n";
    out += "| Model | pass@1 | " + pk + " | ExcessCode | pass@1 | " + pk + " | ExcessCode |\n";
    out += "|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& entry : entries) {
        out += "| " + entry.label;
        for (PromptVariant variant : kAllVariants) {
            auto it = entry.by_variant.find(variant);
            if (it == entry.by_variant.end()) {
                out += " | — | — | —";
            } else {
                out += " | " + format_fixed2(it->second.pass_at_1);
                out += " | " + format_fixed2(it->second.pass_at_20);
                out += " | " + detail::excess_cell(it->second.excess);
            }
        }
        out += " |\n";
    }
    return out;
}

inline std::string render_report(const std::vector<AggregateRow>& rows, const RunManifest& manifest) {
    std::string out = "# Benchmark results\n\n";
    out += render_table(rows);
    out += "\n";
    out += "ExcessCode cells are mean ± standard error of the mean over passing samples";
    out += " with coverage; \"—\" marks an empty aggregate.\n\n";
    out += "manifest digest: " + manifest.stable_digest() + "  \n";
    out += "corpus digest: " + manifest.corpus_digest + "  \n";
    out += "harness version: " + manifest.harness_version + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Run directory: attempts.jsonl, stats.jsonl, aggregates.jsonl,
// manifest.json, report.md. Attempts are the ground truth; everything else
// can be recomputed from them bit-identically.

struct RunPaths {
    fs::path dir;
    fs::path attempts() const { return dir / "attempts.jsonl"; }
    fs::path stats() const { return dir / "stats.jsonl"; }
    fs::path aggregates() const { return dir / "aggregates.jsonl"; }
    fs::path manifest() const { return dir / "manifest.json"; }
    fs::path report() const { return dir / "report.md"; }
};

inline void export_results(const std::vector<EditAttempt>& attempts,
                           const std::vector<ProblemStats>& stats,
                           const std::vector<AggregateRow>& rows, const RunManifest& manifest,
                           const RunPaths& paths) {
    fs::create_directories(paths.dir);
    std::string attempt_lines;
    for (const auto& a : attempts) attempt_lines += attempt_to_json(a).dump() + "\n";
    write_file(paths.attempts(), attempt_lines);

    std::string stat_lines;
    for (const auto& s : stats) stat_lines += problem_stats_to_json(s).dump() + "\n";
    write_file(paths.stats(), stat_lines);

    std::string row_lines;
    for (const auto& r : rows) row_lines += aggregate_row_to_json(r).dump() + "\n";
    write_file(paths.aggregates(), row_lines);

    write_file(paths.manifest(), manifest.to_json().dump(2) + "\n");
    write_file(paths.report(), render_report(rows, manifest));
}

inline std::vector<EditAttempt> load_attempts(const fs::path& path) {
    std::vector<EditAttempt> attempts;
    if (!fs::exists(path)) return attempts;
    for (const auto& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        attempts.push_back(attempt_from_json(nlohmann::json::parse(line)));
    }
    return attempts;
}

inline std::vector<AggregateRow> load_aggregate_rows(const fs::path& path) {
    std::vector<AggregateRow> rows;
    for (const auto& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        rows.push_back(aggregate_row_from_json(nlohmann::json::parse(line)));
    }
    return rows;
}

// Deterministic ordering for exports; attempt records may have been appended
// in any interleaving by parallel workers.
inline void sort_attempts(std::vector<EditAttempt>& attempts) {
    std::stable_sort(attempts.begin(), attempts.end(), [](const EditAttempt& a, const EditAttempt& b) {
        auto key = [](const EditAttempt& x) {
            return std::make_tuple(x.editor_name, to_string(x.mode), to_string(x.variant),
                                   x.problem_id, x.sample_index);
        };
        return key(a) < key(b);
    });
}

}  // namespace cwall
