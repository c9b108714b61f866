#pragma once

// End-to-end run orchestration: annotate -> edit -> execute -> score ->
// report, with an on-disk annotation cache, append-only attempt records and
// resume support. Stages are sequential; items inside a stage run on a
// bounded worker pool.

#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cwall/corpus.hpp"
#include "cwall/executor.hpp"
#include "cwall/metrics.hpp"
#include "cwall/modelclient.hpp"
#include "cwall/pipeline.hpp"
#include "cwall/prompts.hpp"
#include "cwall/report.hpp"
#include "cwall/util.hpp"

namespace cwall {

struct RunConfig {
    fs::path corpus_path;
    std::vector<PromptVariant> variants = {PromptVariant::descriptive, PromptVariant::lazy};
    std::vector<RunMode> modes = {RunMode::baseline, RunMode::chinese_wall};
    std::optional<BackendSpec> annotator;
    std::vector<BackendSpec> editors;
    SamplingParams editor_params;     // 2048 new tokens, T=0.2, top_p=0.95
    SamplingParams annotator_params;  // 100000 new tokens, T=0.2, top_p=0.95, default thinking
    int samples_per_problem = 20;
    int retry_max_tokens = 100000;
    std::chrono::milliseconds exec_timeout{15000};
    unsigned parallelism = std::max(1u, std::thread::hardware_concurrency());
    fs::path output_dir = "runs/latest";
    fs::path cache_dir;     // empty -> output_dir / "annotations"
    fs::path template_dir = "assets/templates";
    bool strict_validation = false;
    bool dedupe_executions = true;
    bool keep_temp = false;
    FileLayout exec_layout = FileLayout::single_file;

    RunConfig() { annotator_params.max_new_tokens = 100000; }

    fs::path annotation_cache_dir() const {
        return cache_dir.empty() ? output_dir / "annotations" : cache_dir;
    }

    ExecConfig exec_config() const {
        ExecConfig cfg;
        cfg.timeout = exec_timeout;
        cfg.keep_temp = keep_temp;
        cfg.layout = exec_layout;
        return cfg;
    }

    void validate() const {
        if (corpus_path.empty()) throw ConfigError("run config: corpus path is required");
        if (editors.empty()) throw ConfigError("run config: at least one editor backend is required");
        if (variants.empty()) throw ConfigError("run config: at least one prompt variant is required");
        if (modes.empty()) throw ConfigError("run config: at least one mode is required");
        bool wants_wall = std::find(modes.begin(), modes.end(), RunMode::chinese_wall) != modes.end();
        if (wants_wall && !annotator.has_value())
            throw ConfigError("run config: chinese_wall mode requires an annotator backend");
        if (samples_per_problem < 1) throw ConfigError("run config: samples per problem must be >= 1");
        editor_params.validate();
        annotator_params.validate();
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["corpus_path"] = corpus_path.string();
        std::vector<std::string> vs, ms;
        for (auto v : variants) vs.push_back(to_string(v));
        for (auto m : modes) ms.push_back(to_string(m));
        j["variants"] = vs;
        j["modes"] = ms;
        j["editor_params"] = sampling_params_to_json(editor_params);
        j["annotator_params"] = sampling_params_to_json(annotator_params);
        j["samples_per_problem"] = samples_per_problem;
        j["retry_max_tokens"] = retry_max_tokens;
        j["timeout_ms"] = int(exec_timeout.count());
        j["parallelism"] = parallelism;
        return j;
    }
};

struct ClientSet {
    std::optional<Client> annotator;
    std::vector<Client> editors;

    static ClientSet from_config(const RunConfig& cfg) {
        ClientSet set;
        if (cfg.annotator.has_value()) set.annotator = Client::from_spec(*cfg.annotator);
        for (const auto& spec : cfg.editors) set.editors.push_back(Client::from_spec(spec));
        return set;
    }

    int total_calls() const {
        int calls = annotator.has_value() ? annotator->calls() : 0;
        for (const auto& e : editors) calls += e.calls();
        return calls;
    }
};

// ---------------------------------------------------------------------------
// Annotation stage

struct AnnotateSummary {
    int total = 0;
    int cached = 0;
    int generated = 0;
    int retried = 0;
    int failed = 0;
    std::vector<std::string> failures;
};

inline AnnotateSummary run_annotate_stage(const RunConfig& cfg, const std::vector<Problem>& corpus,
                                          const Client& annotator, AnnotationStore& store,
                                          const TemplateSet& templates, std::ostream& log) {
    struct Unit {
        const Problem* problem;
        PromptVariant variant;
    };
    std::vector<Unit> units;
    for (const auto& p : corpus)
        for (auto v : cfg.variants) units.push_back({&p, v});

    AnnotateSummary summary;
    summary.total = int(units.size());
    std::mutex mutex;
    parallel_for(units.size(), cfg.parallelism, [&](size_t i) {
        const auto& unit = units[i];
        bool was_cached =
            store.find(unit.problem->id, unit.variant, annotator.spec().name).has_value();
        try {
            AnnotationRecord record = annotate(*unit.problem, unit.variant, annotator,
                                               cfg.annotator_params, cfg.retry_max_tokens, store,
                                               templates);
            auto report = validate_annotation(
                record, *unit.problem,
                cfg.strict_validation ? Strictness::strict : Strictness::lenient);
            std::lock_guard lock(mutex);
            was_cached ? ++summary.cached : ++summary.generated;
            if (record.retried) ++summary.retried;
            for (const auto& d : report.diagnostics) log << "warning: " << d << "\n";
        } catch (const Error& e) {
            std::lock_guard lock(mutex);
            ++summary.failed;
            summary.failures.push_back(e.what());
            log << "error: " << e.what() << "\n";
        }
    });
    return summary;
}

// ---------------------------------------------------------------------------
// Full benchmark run

struct RunSummary {
    RunPaths paths;
    std::vector<AggregateRow> rows;
    AnnotateSummary annotate;
    int attempts_total = 0;
    int attempts_reused = 0;
    int env_failures = 0;
    int skipped_problems = 0;

    bool partial() const { return annotate.failed > 0 || env_failures > 0; }
};

namespace detail {

struct AttemptKey {
    std::string editor;
    std::string mode;
    std::string variant;
    std::string problem;
    int sample = 0;
    auto tie() const { return std::make_tuple(editor, mode, variant, problem, sample); }
    bool operator<(const AttemptKey& o) const { return tie() < o.tie(); }
};

inline AttemptKey key_of(const EditAttempt& a) {
    return AttemptKey{a.editor_name, to_string(a.mode), to_string(a.variant), a.problem_id,
                      a.sample_index};
}

}  // namespace detail

inline RunSummary run_benchmark(const RunConfig& cfg, ClientSet& clients,
                                const TemplateSet& templates, std::ostream& log) {
    cfg.validate();
    bool wants_wall =
        std::find(cfg.modes.begin(), cfg.modes.end(), RunMode::chinese_wall) != cfg.modes.end();
    if (wants_wall && !clients.annotator.has_value())
        throw ConfigError("run: chinese_wall mode requires an annotator client");
    if (clients.editors.size() != cfg.editors.size())
        throw ConfigError("run: client set does not match configured editors");

    std::string corpus_bytes = read_file(cfg.corpus_path);
    std::vector<Problem> corpus = parse_corpus(corpus_bytes, cfg.corpus_path.string());

    RunSummary summary;
    summary.paths.dir = cfg.output_dir;
    fs::create_directories(cfg.output_dir);

    std::vector<Problem> evaluable;
    for (const auto& p : corpus) {
        if (p.evaluable()) {
            evaluable.push_back(p);
        } else {
            ++summary.skipped_problems;
            log << "note: problem '" << p.id << "' has no test suite; excluded from scoring\n";
        }
    }
    if (evaluable.empty()) throw ConfigError("run: corpus has no evaluable problems");

    AnnotationStore store(cfg.annotation_cache_dir());
    if (wants_wall) {
        summary.annotate = run_annotate_stage(cfg, evaluable, *clients.annotator, store, templates, log);
        log << "annotation stage: " << summary.annotate.generated << " generated, "
            << summary.annotate.cached << " cached, " << summary.annotate.retried << " retried, "
            << summary.annotate.failed << " failed\n";
    }

    // Resume: existing attempt records are never regenerated.
    std::map<detail::AttemptKey, EditAttempt> attempts_by_key;
    for (auto& a : load_attempts(summary.paths.attempts())) {
        attempts_by_key[detail::key_of(a)] = std::move(a);
    }
    summary.attempts_reused = int(attempts_by_key.size());

    struct Unit {
        const Problem* problem;
        PromptVariant variant;
        RunMode mode;
        size_t editor_index;
    };
    std::vector<Unit> units;
    for (size_t e = 0; e < clients.editors.size(); ++e)
        for (auto mode : cfg.modes)
            for (auto variant : cfg.variants)
                for (const auto& p : evaluable) units.push_back({&p, variant, mode, e});

    std::mutex sink_mutex;  // guards attempts_by_key and the append-only file
    std::mutex exec_memo_mutex;
    std::map<std::string, ExecutionOutcome> exec_memo;
    ExecConfig exec_cfg = cfg.exec_config();
    std::atomic<int> env_failures{0};

    auto execute_candidate = [&](const Problem& problem, const std::string& candidate) {
        std::string memo_key;
        if (cfg.dedupe_executions) {
            memo_key = problem.id + "\x1f" + sha256_hex(candidate);
            std::lock_guard lock(exec_memo_mutex);
            auto it = exec_memo.find(memo_key);
            if (it != exec_memo.end()) return it->second;
        }
        ExecutionOutcome outcome = run_tests_with_coverage(
            candidate, problem.test_suite, problem.subject_language, cfg.exec_timeout, exec_cfg);
        if (cfg.dedupe_executions) {
            std::lock_guard lock(exec_memo_mutex);
            exec_memo.emplace(memo_key, outcome);
        }
        return outcome;
    };

    parallel_for(units.size(), cfg.parallelism, [&](size_t i) {
        const Unit& unit = units[i];
        const Client& editor = clients.editors[unit.editor_index];
        const int n = cfg.samples_per_problem;

        std::vector<int> missing;
        {
            std::lock_guard lock(sink_mutex);
            for (int s = 0; s < n; ++s) {
                detail::AttemptKey k{editor.spec().name, to_string(unit.mode),
                                     to_string(unit.variant), unit.problem->id, s};
                if (!attempts_by_key.count(k)) missing.push_back(s);
            }
        }
        if (missing.empty()) return;

        std::vector<EditAttempt> fresh;
        std::optional<AnnotationRecord> annotation;
        if (unit.mode == RunMode::chinese_wall) {
            annotation = store.find(unit.problem->id, unit.variant, clients.annotator->spec().name);
            if (!annotation.has_value()) {
                // Annotation failed upstream: the slots still exist, scored
                // as failures, so the run stays total.
                for (int s : missing) {
                    EditAttempt a;
                    a.problem_id = unit.problem->id;
                    a.variant = unit.variant;
                    a.mode = unit.mode;
                    a.editor_name = editor.spec().name;
                    a.sample_index = s;
                    a.generation_error = "no annotation available";
                    fresh.push_back(std::move(a));
                }
            }
        }
        if (fresh.empty()) {
            EditStage stage =
                run_edit_stage(*unit.problem, unit.variant, unit.mode, annotation, editor,
                               cfg.editor_params, int(missing.size()), templates);
            for (size_t s = 0; s < missing.size(); ++s) {
                stage.attempts[s].sample_index = missing[s];
                fresh.push_back(std::move(stage.attempts[s]));
            }
        }

        for (auto& attempt : fresh) {
            attempt.outcome = execute_candidate(*unit.problem, attempt.extracted_code);
            if (attempt.outcome->env_failure) env_failures.fetch_add(1);
            std::lock_guard lock(sink_mutex);
            append_line(summary.paths.attempts(), attempt_to_json(attempt).dump());
            attempts_by_key[detail::key_of(attempt)] = attempt;
        }
    });

    summary.env_failures = env_failures.load();

    std::vector<EditAttempt> attempts;
    attempts.reserve(attempts_by_key.size());
    for (auto& [key, attempt] : attempts_by_key) attempts.push_back(attempt);
    sort_attempts(attempts);
    summary.attempts_total = int(attempts.size());

    std::vector<ProblemStats> stats = build_problem_stats(attempts, evaluable);
    std::string annotator_name = cfg.annotator.has_value() ? cfg.annotator->name : "";
    summary.rows = build_aggregate_rows(stats, annotator_name);

    RunManifest manifest;
    manifest.corpus_digest = corpus_digest(corpus_bytes);
    manifest.corpus_path = cfg.corpus_path.string();
    manifest.backends["annotator"] =
        cfg.annotator.has_value() ? backend_spec_to_json(*cfg.annotator)
                                  : nlohmann::ordered_json(nullptr);
    auto editor_specs = nlohmann::ordered_json::array();
    for (const auto& spec : cfg.editors) editor_specs.push_back(backend_spec_to_json(spec));
    manifest.backends["editors"] = std::move(editor_specs);
    manifest.editor_params = sampling_params_to_json(cfg.editor_params);
    manifest.annotator_params = sampling_params_to_json(cfg.annotator_params);
    for (auto m : cfg.modes) manifest.modes.push_back(to_string(m));
    for (auto v : cfg.variants) manifest.variants.push_back(to_string(v));
    manifest.samples_per_problem = cfg.samples_per_problem;
    manifest.retry_max_tokens = cfg.retry_max_tokens;
    manifest.timeout_ms = int(cfg.exec_timeout.count());
    manifest.created_at = iso8601_utc_now();

    export_results(attempts, stats, summary.rows, manifest, summary.paths);
    return summary;
}

// Recompute stats, aggregates and the report from a run directory's attempt
// records; metrics replay bit-identically from the exported lines.
inline RunSummary replay_run(const fs::path& run_dir, const fs::path& corpus_path,
                             std::ostream& log) {
    RunSummary summary;
    summary.paths.dir = run_dir;
    if (!fs::exists(summary.paths.manifest()))
        throw IoError("no manifest in run directory: " + run_dir.string());
    RunManifest manifest =
        RunManifest::from_json(nlohmann::json::parse(read_file(summary.paths.manifest())));

    fs::path corpus_file = corpus_path.empty() ? fs::path(manifest.corpus_path) : corpus_path;
    std::string corpus_bytes = read_file(corpus_file);
    if (corpus_digest(corpus_bytes) != manifest.corpus_digest)
        log << "warning: corpus digest differs from the manifest; ExcessCode may shift\n";
    std::vector<Problem> corpus = parse_corpus(corpus_bytes, corpus_file.string());

    std::vector<EditAttempt> attempts = load_attempts(summary.paths.attempts());
    sort_attempts(attempts);
    summary.attempts_total = int(attempts.size());

    std::vector<ProblemStats> stats = build_problem_stats(attempts, corpus);
    std::string annotator_name;
    if (manifest.backends.contains("annotator") && manifest.backends.at("annotator").is_object())
        annotator_name = manifest.backends.at("annotator").value("name", "");
    summary.rows = build_aggregate_rows(stats, annotator_name);
    export_results(attempts, stats, summary.rows, manifest, summary.paths);
    return summary;
}

}  // namespace cwall
