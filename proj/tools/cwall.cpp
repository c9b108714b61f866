// cwall: benchmark harness for annotate-then-edit code editing runs.
//
// Subcommands:
//   import    convert an upstream benchmark checkout into the corpus format
//   annotate  populate the annotation cache for a corpus
//   run       full pipeline: annotate, edit, execute, score, report
//   demo      annotate + edit a single file, no scoring
//   report    re-render report.md from a run directory
//
// Exit codes: 0 success, 1 partial (some problems failed infrastructure-
// wise), 2 configuration error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cwall/cwall.hpp"

namespace {

using namespace cwall;

BackendSpec parse_backend_arg(const std::string& arg) {
    std::string text;
    if (!arg.empty() && arg.front() == '{') {
        text = arg;
    } else {
        text = read_file(arg);
    }
    try {
        return backend_spec_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("backend spec '" + arg + "': " + e.what());
    }
}

std::vector<PromptVariant> parse_variants(const std::string& arg) {
    if (arg == "both") return {PromptVariant::descriptive, PromptVariant::lazy};
    return {prompt_variant_from_string(arg)};
}

std::vector<RunMode> parse_modes(const std::string& arg) {
    if (arg == "both") return {RunMode::baseline, RunMode::chinese_wall};
    return {run_mode_from_string(arg)};
}

int cmd_import(const std::string& upstream, const std::string& out, bool force) {
    if (fs::exists(out) && !force) {
        std::cerr << "refusing to overwrite existing corpus " << out << " (use --force)\n";
        return 2;
    }
    std::vector<Problem> problems = import_upstream(upstream);
    save_corpus(problems, out);
    std::cout << "imported " << problems.size() << " problems to " << out << "\n";
    return 0;
}

int cmd_annotate(RunConfig cfg, const std::string& variant_arg) {
    cfg.variants = parse_variants(variant_arg);
    if (!cfg.annotator.has_value()) throw ConfigError("annotate: --annotator is required");
    cfg.modes = {RunMode::chinese_wall};
    cfg.validate();

    std::vector<Problem> corpus = load_corpus(cfg.corpus_path);
    TemplateSet templates = TemplateSet::load(cfg.template_dir);
    AnnotationStore store(cfg.annotation_cache_dir());
    Client annotator = Client::from_spec(*cfg.annotator);

    auto summary = run_annotate_stage(cfg, corpus, annotator, store, templates, std::cerr);
    std::cout << "annotated " << (summary.generated + summary.cached) << "/" << summary.total
              << " (problem, variant) pairs: " << summary.generated << " generated, "
              << summary.cached << " cached, " << summary.retried << " retried, " << summary.failed
              << " failed\n";
    std::cout << "backend calls: " << annotator.calls() << "\n";
    if (summary.failed > 0) {
        for (const auto& f : summary.failures) std::cerr << "failed: " << f << "\n";
        return 1;
    }
    return 0;
}

int cmd_run(RunConfig cfg, const std::string& variant_arg, const std::string& mode_arg) {
    cfg.variants = parse_variants(variant_arg);
    cfg.modes = parse_modes(mode_arg);
    cfg.validate();

    TemplateSet templates = TemplateSet::load(cfg.template_dir);
    ClientSet clients = ClientSet::from_config(cfg);
    RunSummary summary = run_benchmark(cfg, clients, templates, std::cerr);

    std::cout << read_file(summary.paths.report());
    std::cout << "\nattempts: " << summary.attempts_total << " (" << summary.attempts_reused
              << " reused)\n";
    std::cout << "backend calls: " << clients.total_calls() << "\n";
    std::cout << "run directory: " << summary.paths.dir.string() << "\n";
    return summary.partial() ? 1 : 0;
}

int cmd_demo(const std::string& code_path, const std::string& instruction,
             const BackendSpec& annotator_spec, const BackendSpec& editor_spec,
             const std::string& language_arg, const fs::path& template_dir) {
    Problem problem;
    problem.id = fs::path(code_path).stem().string();
    problem.name = problem.id;
    problem.before_code = read_file(code_path);
    problem.instruction_descriptive = instruction;
    problem.instruction_lazy = instruction;
    if (!language_arg.empty()) {
        problem.subject_language = subject_language_from_string(language_arg);
    } else if (fs::path(code_path).extension() == ".c") {
        problem.subject_language = SubjectLanguage::c;
    }

    TemplateSet templates = TemplateSet::load(template_dir);
    Client annotator = Client::from_spec(annotator_spec);
    Client editor = Client::from_spec(editor_spec);

    AnnotationStore store;  // memory-only
    SamplingParams annotator_params;
    annotator_params.max_new_tokens = 100000;
    AnnotationRecord record = annotate(problem, PromptVariant::descriptive, annotator,
                                       annotator_params, 200000, store, templates);
    std::cout << "== annotated code ==\n" << record.annotated_code << "\n";

    RenderedPrompt prompt;
    if (editor.spec().kind == BackendKind::completion) {
        prompt = render_base_editor(templates, record.annotated_code, instruction);
    } else {
        // The editor sees the instruction only through the EDIT comments.
        prompt = render_instruct_editor(templates, record.annotated_code, std::nullopt);
    }
    SamplingParams editor_params;
    ModelResponse response = editor.generate(prompt, editor_params);
    if (response.finish_reason == FinishReason::error)
        throw BackendError("editor failed: " + response.diagnostic);
    std::string code = extract_code(response.text);
    if (!contains(response.text, "```"))
        std::cerr << "warning: editor response had no fenced code block; printing trimmed text\n";
    std::cout << "== edited code ==\n" << code << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& corpus) {
    RunSummary summary = replay_run(run_dir, corpus, std::cerr);
    std::cout << read_file(summary.paths.report());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chinese Wall code-editing benchmark harness"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI/TOML file; flags win");

    // import
    auto* import_cmd = app.add_subcommand("import", "Convert an upstream benchmark checkout");
    std::string import_path, import_out;
    bool import_force = false;
    import_cmd->add_option("upstream", import_path, "Upstream checkout directory or dataset file")
        ->required();
    import_cmd->add_option("out", import_out, "Output corpus file (JSON lines)")->required();
    import_cmd->add_flag("--force", import_force, "Overwrite an existing corpus file");

    // shared run/annotate options
    RunConfig cfg;
    std::string variant_arg = "both";
    std::string mode_arg = "both";
    std::string annotator_arg;
    std::vector<std::string> editor_args;
    std::string cache_arg;

    auto add_common = [&](CLI::App* cmd, bool with_editors) {
        cmd->add_option("--corpus", cfg.corpus_path, "Corpus file")->required();
        cmd->add_option("--annotator", annotator_arg, "Annotator backend spec (JSON file or inline)");
        cmd->add_option("--out", cfg.output_dir, "Run/output directory")->capture_default_str();
        cmd->add_option("--cache", cache_arg, "Annotation cache directory (default: <out>/annotations)");
        cmd->add_option("--templates", cfg.template_dir, "Template asset directory")
            ->capture_default_str();
        cmd->add_option("--variants", variant_arg, "descriptive, lazy or both")->capture_default_str();
        cmd->add_option("--parallelism", cfg.parallelism, "Worker pool size")->capture_default_str();
        cmd->add_option("--retry-max-tokens", cfg.retry_max_tokens,
                        "Token budget for the single truncation retry")
            ->capture_default_str();
        cmd->add_flag("--strict", cfg.strict_validation,
                      "Fail problems whose annotation modified the code");
        if (with_editors) {
            cmd->add_option("--editor", editor_args, "Editor backend spec (repeatable)");
            cmd->add_option("--modes", mode_arg, "baseline, chinese_wall or both")
                ->capture_default_str();
            cmd->add_option("--n", cfg.samples_per_problem, "Completions sampled per problem")
                ->capture_default_str();
            int timeout_ms = int(cfg.exec_timeout.count());
            cmd->add_option_function<int>(
                   "--timeout-ms", [&cfg](int v) { cfg.exec_timeout = std::chrono::milliseconds(v); },
                   "Per-attempt execution timeout")
                ->default_val(timeout_ms);
            cmd->add_flag("--keep-temp", cfg.keep_temp, "Keep execution temp directories");
            bool no_dedupe = false;
            cmd->add_flag_function(
                "--no-dedupe", [&cfg](int64_t) { cfg.dedupe_executions = false; },
                "Execute every sample even when extracted code repeats");
            (void)no_dedupe;
        }
    };

    auto* annotate_cmd = app.add_subcommand("annotate", "Populate the annotation cache");
    add_common(annotate_cmd, false);

    auto* run_cmd = app.add_subcommand("run", "Run the benchmark end to end");
    add_common(run_cmd, true);

    // demo
    auto* demo_cmd = app.add_subcommand("demo", "Annotate and edit one file, print the results");
    std::string demo_code, demo_instruction, demo_annotator, demo_editor, demo_language;
    fs::path demo_templates = "assets/templates";
    demo_cmd->add_option("code", demo_code, "Source file to edit")->required();
    demo_cmd->add_option("--instruction", demo_instruction, "Edit instruction")->required();
    demo_cmd->add_option("--annotator", demo_annotator, "Annotator backend spec")->required();
    demo_cmd->add_option("--editor", demo_editor, "Editor backend spec")->required();
    demo_cmd->add_option("--language", demo_language, "Subject language (default: from extension)");
    demo_cmd->add_option("--templates", demo_templates, "Template asset directory")
        ->capture_default_str();

    // report
    auto* report_cmd = app.add_subcommand("report", "Re-render the report from a run directory");
    std::string report_dir, report_corpus;
    report_cmd->add_option("run_dir", report_dir, "Run directory")->required();
    report_cmd->add_option("--corpus", report_corpus,
                           "Corpus file (default: the path recorded in the manifest)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*import_cmd) return cmd_import(import_path, import_out, import_force);
        if (!cache_arg.empty()) cfg.cache_dir = cache_arg;
        if (!annotator_arg.empty()) cfg.annotator = parse_backend_arg(annotator_arg);
        for (const auto& e : editor_args) cfg.editors.push_back(parse_backend_arg(e));
        if (*annotate_cmd) return cmd_annotate(cfg, variant_arg);
        if (*run_cmd) return cmd_run(cfg, variant_arg, mode_arg);
        if (*demo_cmd)
            return cmd_demo(demo_code, demo_instruction, parse_backend_arg(demo_annotator),
                            parse_backend_arg(demo_editor), demo_language, demo_templates);
        if (*report_cmd) return cmd_report(report_dir, report_corpus);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
