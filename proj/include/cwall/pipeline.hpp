#pragma once

// The annotate-then-edit flow: annotate once per (problem, variant) with an
// on-disk cache, fan editor sampling out over cached annotations, extract
// code from model responses, and check that the annotator only added
// comments.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cwall/corpus.hpp"
#include "cwall/executor.hpp"
#include "cwall/modelclient.hpp"
#include "cwall/prompts.hpp"
#include "cwall/util.hpp"

namespace cwall {

enum class RunMode { baseline, chinese_wall };

inline std::string to_string(RunMode m) {
    return m == RunMode::baseline ? "baseline" : "chinese_wall";
}

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "baseline") return RunMode::baseline;
    if (s == "chinese_wall") return RunMode::chinese_wall;
    throw FormatError("unknown run mode: '" + s + "'");
}

// ---------------------------------------------------------------------------
// Code extraction from model responses.
//
// Models are told "only produce the code" but routinely wrap it in prose and
// markdown fences. Take the longest fenced block when any exist (small
// illustrative snippets lose to the full file; first wins a tie); otherwise
// the whole response minus leading/trailing blank lines. An unterminated
// fence runs to the end of the response.

inline std::string extract_code(const std::string& raw_response) {
    std::vector<std::string> lines = split_lines(raw_response);
    std::vector<std::string> blocks;
    std::string current;
    bool in_block = false;
    bool first_line_of_block = true;
    for (const auto& line : lines) {
        bool fence = trim(line).rfind("```", 0) == 0;
        if (fence) {
            if (in_block) {
                blocks.push_back(current);
                current.clear();
                in_block = false;
            } else {
                in_block = true;
                first_line_of_block = true;
            }
            continue;
        }
        if (in_block) {
            if (!first_line_of_block) current += '\n';
            current += line;
            first_line_of_block = false;
        }
    }
    if (in_block) blocks.push_back(current);

    if (blocks.empty()) return trim_blank_lines(raw_response);
    size_t best = 0;
    for (size_t i = 1; i < blocks.size(); ++i)
        if (blocks[i].size() > blocks[best].size()) best = i;
    return blocks[best];
}

// ---------------------------------------------------------------------------
// EDIT-comment stripping.
//
// Removes, line-wise:
//   - full-line comments whose first content is marker + optional space +
//     "EDIT:", together with immediately following comment lines at the same
//     or deeper indentation (multi-line instruction blocks);
//   - trailing same-line comments that start with marker + "EDIT:", with the
//     trailing whitespace they leave behind.
// Everything else is byte-preserved. Blank lines end a block.

namespace detail {

inline size_t indent_width(std::string_view line) {
    size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    return i;
}

// If the line's first content is a comment, returns the text after the
// marker; otherwise nullopt.
inline std::optional<std::string_view> comment_rest(std::string_view line,
                                                    const std::vector<std::string>& markers) {
    size_t indent = indent_width(line);
    std::string_view content = line.substr(indent);
    for (const auto& marker : markers) {
        if (content.rfind(marker, 0) == 0) return content.substr(marker.size());
    }
    return std::nullopt;
}

inline bool rest_is_edit(std::string_view rest) {
    size_t i = 0;
    while (i < rest.size() && rest[i] == ' ') ++i;
    return rest.substr(i).rfind("EDIT:", 0) == 0;
}

// Position of a trailing marker+EDIT: comment, npos when absent.
inline size_t trailing_edit_pos(std::string_view line, const std::vector<std::string>& markers) {
    for (const auto& marker : markers) {
        size_t from = 0;
        for (;;) {
            size_t pos = line.find(marker, from);
            if (pos == std::string_view::npos) break;
            if (rest_is_edit(line.substr(pos + marker.size()))) return pos;
            from = pos + marker.size();
        }
    }
    return std::string_view::npos;
}

}  // namespace detail

inline std::string strip_edit_comments(const std::string& code,
                                       const std::vector<std::string>& markers = {"#"}) {
    if (markers.empty()) throw ContractError("strip_edit_comments: markers must be non-empty");
    bool ends_with_newline = !code.empty() && code.back() == '\n';
    std::vector<std::string> kept;
    bool in_edit_block = false;
    size_t block_indent = 0;
    for (const auto& line : split_lines(code)) {
        if (trim(line).empty()) {
            in_edit_block = false;
            kept.push_back(line);
            continue;
        }
        size_t indent = detail::indent_width(line);
        auto rest = detail::comment_rest(line, markers);
        if (rest.has_value()) {
            if (detail::rest_is_edit(*rest)) {
                in_edit_block = true;
                block_indent = indent;
                continue;
            }
            if (in_edit_block && indent >= block_indent) continue;  // instruction continuation
            in_edit_block = false;
            kept.push_back(line);
            continue;
        }
        in_edit_block = false;
        size_t cut = detail::trailing_edit_pos(line, markers);
        if (cut != std::string::npos) {
            kept.push_back(rtrim(std::string_view(line).substr(0, cut)));
        } else {
            kept.push_back(line);
        }
    }
    std::string out = join_lines(kept);
    if (ends_with_newline && !out.empty()) out += '\n';
    return out;
}

// Number of lines carrying an EDIT comment (full-line or trailing).
inline int count_edit_comments(const std::string& code,
                               const std::vector<std::string>& markers = {"#"}) {
    int count = 0;
    for (const auto& line : split_lines(code)) {
        auto rest = detail::comment_rest(line, markers);
        if (rest.has_value() && detail::rest_is_edit(*rest)) {
            ++count;
        } else if (!rest.has_value() &&
                   detail::trailing_edit_pos(line, markers) != std::string::npos) {
            ++count;
        }
    }
    return count;
}

// ---------------------------------------------------------------------------
// Annotation records and the one-annotation-per-key cache.

struct AnnotationRecord {
    std::string problem_id;
    PromptVariant variant = PromptVariant::descriptive;
    std::string annotated_code;
    std::string annotator_name;
    SamplingParams params_used;
    bool retried = false;
    std::string created_at;  // ISO-8601 UTC
};

inline nlohmann::ordered_json annotation_to_json(const AnnotationRecord& r) {
    nlohmann::ordered_json j;
    j["problem_id"] = r.problem_id;
    j["variant"] = to_string(r.variant);
    j["annotated_code"] = r.annotated_code;
    j["annotator_name"] = r.annotator_name;
    j["params_used"] = sampling_params_to_json(r.params_used);
    j["retried"] = r.retried;
    j["created_at"] = r.created_at;
    return j;
}

inline AnnotationRecord annotation_from_json(const nlohmann::json& j) {
    AnnotationRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.variant = prompt_variant_from_string(j.at("variant").get<std::string>());
    r.annotated_code = j.at("annotated_code").get<std::string>();
    r.annotator_name = j.at("annotator_name").get<std::string>();
    r.params_used = sampling_params_from_json(j.at("params_used"));
    r.retried = j.at("retried").get<bool>();
    r.created_at = j.at("created_at").get<std::string>();
    if (r.annotated_code.empty()) throw FormatError("annotation record: empty annotated_code");
    return r;
}

// One file per record under the cache directory; an empty directory path
// keeps the store memory-only (handy in tests and the demo flow).
class AnnotationStore {
public:
    AnnotationStore() = default;

    explicit AnnotationStore(fs::path dir) : dir_(std::move(dir)) {
        if (dir_.empty()) return;
        fs::create_directories(dir_);
        for (const auto& entry : fs::directory_iterator(dir_)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
            AnnotationRecord record;
            try {
                record = annotation_from_json(nlohmann::json::parse(read_file(entry.path())));
            } catch (const std::exception& e) {
                throw FormatError("annotation cache " + entry.path().string() + ": " + e.what());
            }
            records_[key(record.problem_id, record.variant, record.annotator_name)] = record;
        }
    }

    static std::string key(const std::string& problem_id, PromptVariant variant,
                           const std::string& annotator_name) {
        return problem_id + "\x1f" + to_string(variant) + "\x1f" + annotator_name;
    }

    std::optional<AnnotationRecord> find(const std::string& problem_id, PromptVariant variant,
                                         const std::string& annotator_name) const {
        std::lock_guard lock(mutex_);
        auto it = records_.find(key(problem_id, variant, annotator_name));
        if (it == records_.end()) return std::nullopt;
        return it->second;
    }

    void put(const AnnotationRecord& record) {
        std::string k = key(record.problem_id, record.variant, record.annotator_name);
        {
            std::lock_guard lock(mutex_);
            records_[k] = record;
        }
        if (!dir_.empty()) write_file(dir_ / filename(record), annotation_to_json(record).dump(2));
    }

    size_t size() const {
        std::lock_guard lock(mutex_);
        return records_.size();
    }

    // Per-key mutex so concurrent requests for one annotation coalesce into
    // a single backend call.
    std::shared_ptr<std::mutex> flight_lock(const std::string& k) {
        std::lock_guard lock(mutex_);
        auto& slot = flights_[k];
        if (!slot) slot = std::make_shared<std::mutex>();
        return slot;
    }

private:
    static std::string filename(const AnnotationRecord& r) {
        std::string k = key(r.problem_id, r.variant, r.annotator_name);
        return sanitize_for_filename(r.problem_id) + "." + to_string(r.variant) + "." +
               sanitize_for_filename(r.annotator_name) + "-" + to_hex(fnv1a64(k), 8) + ".json";
    }

    fs::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, AnnotationRecord> records_;
    std::map<std::string, std::shared_ptr<std::mutex>> flights_;
};

// Annotate once per (problem, variant, annotator); the cache short-circuits
// every later request, so a multi-editor run costs one annotator call per
// key. Truncation (empty text at the token limit) is retried once with
// retry_max_tokens; a second truncation fails the problem.
inline AnnotationRecord annotate(const Problem& problem, PromptVariant variant,
                                 const Client& annotator, const SamplingParams& params,
                                 int retry_max_tokens, AnnotationStore& store,
                                 const TemplateSet& templates) {
    std::string cache_key = AnnotationStore::key(problem.id, variant, annotator.spec().name);
    auto flight = store.flight_lock(cache_key);
    std::lock_guard lock(*flight);

    if (auto hit = store.find(problem.id, variant, annotator.spec().name)) return *hit;

    RenderedPrompt prompt = render_annotator(templates, problem, variant);
    ModelResponse resp;
    try {
        resp = generate_with_truncation_retry(annotator, prompt, params, retry_max_tokens);
    } catch (const Error& e) {
        throw AnnotationError("annotation failed for '" + problem.id + "' (" + to_string(variant) +
                              "): " + e.what());
    }
    if (resp.finish_reason == FinishReason::error)
        throw AnnotationError("annotation failed for '" + problem.id + "' (" + to_string(variant) +
                              "): " + resp.diagnostic);
    std::string annotated = extract_code(resp.text);
    if (trim(annotated).empty())
        throw AnnotationError("annotation for '" + problem.id + "' (" + to_string(variant) +
                              ") came back empty" +
                              (resp.finish_reason == FinishReason::length ? " (token limit hit twice)"
                                                                          : ""));
    AnnotationRecord record;
    record.problem_id = problem.id;
    record.variant = variant;
    record.annotated_code = annotated;
    record.annotator_name = annotator.spec().name;
    record.params_used = params;
    record.retried = resp.retried;
    record.created_at = iso8601_utc_now();
    store.put(record);
    return record;
}

// ---------------------------------------------------------------------------
// Annotation discipline check: stripping the EDIT comments must give back
// the original code (modulo trailing whitespace and trailing newlines).

struct ValidationReport {
    bool stripped_matches_original = false;
    int edit_comment_count = 0;
    std::vector<std::string> diagnostics;
};

enum class Strictness { strict, lenient };

namespace detail {

inline std::vector<std::string> normalized_lines(const std::string& text) {
    std::vector<std::string> lines;
    for (const auto& line : split_lines(text)) lines.push_back(rtrim(line));
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

}  // namespace detail

inline ValidationReport validate_annotation(const AnnotationRecord& record, const Problem& problem,
                                            Strictness strictness = Strictness::lenient) {
    auto markers = comment_markers(problem.subject_language);
    ValidationReport report;
    report.edit_comment_count = count_edit_comments(record.annotated_code, markers);

    auto stripped = detail::normalized_lines(strip_edit_comments(record.annotated_code, markers));
    auto original = detail::normalized_lines(problem.before_code);
    report.stripped_matches_original = stripped == original;
    if (!report.stripped_matches_original) {
        size_t i = 0;
        while (i < stripped.size() && i < original.size() && stripped[i] == original[i]) ++i;
        std::string got = i < stripped.size() ? stripped[i] : "<missing>";
        std::string want = i < original.size() ? original[i] : "<missing>";
        report.diagnostics.push_back("annotation for '" + record.problem_id + "' modified code at line " +
                                     std::to_string(i + 1) + ": expected \"" + want + "\", got \"" +
                                     got + "\"");
        if (strictness == Strictness::strict) throw ValidationError(report.diagnostics.back());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Edit stage: render the editor prompt for the mode, sample n completions,
// extract code from each. Execution is a separate stage.

struct EditAttempt {
    std::string problem_id;
    PromptVariant variant = PromptVariant::descriptive;
    RunMode mode = RunMode::chinese_wall;
    std::string editor_name;
    int sample_index = 0;
    std::string raw_response;
    std::string extracted_code;
    std::string generation_error;  // per-slot failure, scored as a fail later
    std::optional<ExecutionOutcome> outcome;
};

struct EditStage {
    RenderedPrompt prompt;  // the one prompt all n samples saw
    std::vector<EditAttempt> attempts;
};

inline EditStage run_edit_stage(const Problem& problem, PromptVariant variant, RunMode mode,
                                const std::optional<AnnotationRecord>& annotation,
                                const Client& editor, const SamplingParams& params, int n,
                                const TemplateSet& templates, bool include_instruction = true) {
    if (n < 1) throw ContractError("run_edit_stage: n must be >= 1");
    if (mode == RunMode::chinese_wall && !annotation.has_value())
        throw ContractError("chinese_wall mode requires an annotation for '" + problem.id + "'");
    if (mode == RunMode::baseline && annotation.has_value())
        throw ContractError("baseline mode must not receive an annotation for '" + problem.id + "'");

    bool completion_editor = editor.spec().kind == BackendKind::completion;
    const std::string& instruction = problem.instruction(variant);
    if (completion_editor && trim(instruction).empty())
        throw ConfigError("completion editor '" + editor.spec().name +
                          "' needs a non-empty instruction for problem '" + problem.id + "'");

    // Only annotated_code crosses the wall; no other annotator output is
    // visible to the editor.
    EditStage stage;
    if (mode == RunMode::chinese_wall) {
        const std::string& annotated = annotation->annotated_code;
        if (completion_editor) {
            stage.prompt = render_base_editor(templates, annotated, instruction);
        } else {
            std::optional<std::string> inst;
            if (include_instruction) inst = instruction;
            stage.prompt = render_instruct_editor(templates, annotated, inst);
        }
    } else {
        stage.prompt = render_baseline_editor(
            templates, completion_editor ? PromptKind::completion : PromptKind::chat,
            problem.before_code, instruction);
    }

    auto responses = sample_n(editor, stage.prompt, params, n);
    stage.attempts.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        EditAttempt attempt;
        attempt.problem_id = problem.id;
        attempt.variant = variant;
        attempt.mode = mode;
        attempt.editor_name = editor.spec().name;
        attempt.sample_index = i;
        const ModelResponse& resp = responses[size_t(i)];
        if (resp.finish_reason == FinishReason::error) {
            attempt.generation_error = resp.diagnostic;
        } else {
            attempt.raw_response = resp.text;
            attempt.extracted_code = extract_code(resp.text);
        }
        stage.attempts.push_back(std::move(attempt));
    }
    return stage;
}

// ---------------------------------------------------------------------------
// Attempt (de)serialization: one JSON object per line in results files.

inline nlohmann::ordered_json outcome_to_json(const ExecutionOutcome& o) {
    nlohmann::ordered_json j;
    j["status"] = to_string(o.status);
    if (o.exit_code.has_value()) j["exit_code"] = *o.exit_code;
    j["duration_seconds"] = o.duration_seconds;
    j["stdout_tail"] = o.stdout_tail;
    j["stderr_tail"] = o.stderr_tail;
    if (o.covered_lines.has_value())
        j["covered_lines"] = std::vector<int>(o.covered_lines->begin(), o.covered_lines->end());
    if (o.executable_lines.has_value())
        j["executable_lines"] =
            std::vector<int>(o.executable_lines->begin(), o.executable_lines->end());
    if (!o.diagnostic.empty()) j["diagnostic"] = o.diagnostic;
    if (o.env_failure) j["env_failure"] = true;
    return j;
}

inline ExecutionOutcome outcome_from_json(const nlohmann::json& j) {
    ExecutionOutcome o;
    o.status = exec_status_from_string(j.at("status").get<std::string>());
    if (j.contains("exit_code")) o.exit_code = j.at("exit_code").get<int>();
    o.duration_seconds = j.at("duration_seconds").get<double>();
    o.stdout_tail = j.at("stdout_tail").get<std::string>();
    o.stderr_tail = j.at("stderr_tail").get<std::string>();
    if (j.contains("covered_lines")) {
        std::set<int> s;
        for (const auto& v : j.at("covered_lines")) s.insert(v.get<int>());
        o.covered_lines = std::move(s);
    }
    if (j.contains("executable_lines")) {
        std::set<int> s;
        for (const auto& v : j.at("executable_lines")) s.insert(v.get<int>());
        o.executable_lines = std::move(s);
    }
    if (j.contains("diagnostic")) o.diagnostic = j.at("diagnostic").get<std::string>();
    if (j.contains("env_failure")) o.env_failure = j.at("env_failure").get<bool>();
    return o;
}

inline nlohmann::ordered_json attempt_to_json(const EditAttempt& a) {
    nlohmann::ordered_json j;
    j["problem_id"] = a.problem_id;
    j["variant"] = to_string(a.variant);
    j["mode"] = to_string(a.mode);
    j["editor_name"] = a.editor_name;
    j["sample_index"] = a.sample_index;
    j["raw_response"] = a.raw_response;
    j["extracted_code"] = a.extracted_code;
    if (!a.generation_error.empty()) j["generation_error"] = a.generation_error;
    if (a.outcome.has_value()) j["outcome"] = outcome_to_json(*a.outcome);
    return j;
}

inline EditAttempt attempt_from_json(const nlohmann::json& j) {
    EditAttempt a;
    a.problem_id = j.at("problem_id").get<std::string>();
    a.variant = prompt_variant_from_string(j.at("variant").get<std::string>());
    a.mode = run_mode_from_string(j.at("mode").get<std::string>());
    a.editor_name = j.at("editor_name").get<std::string>();
    a.sample_index = j.at("sample_index").get<int>();
    a.raw_response = j.at("raw_response").get<std::string>();
    a.extracted_code = j.at("extracted_code").get<std::string>();
    if (j.contains("generation_error")) a.generation_error = j.at("generation_error").get<std::string>();
    if (j.contains("outcome")) a.outcome = outcome_from_json(j.at("outcome"));
    return a;
}

}  // namespace cwall
