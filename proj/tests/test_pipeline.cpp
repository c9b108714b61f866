#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "test_support.hpp"

using namespace cwall;
using cwall::test::scripted_client;
using cwall::test::TempDir;

namespace {

std::string appendix(const std::string& name) {
    return read_file(cwall::test::fixture_dir() / "appendix" / name);
}

std::vector<std::string> norm(const std::string& text) {
    std::vector<std::string> lines;
    for (const auto& line : split_lines(text)) lines.push_back(rtrim(line));
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

}  // namespace

// ---------------------------------------------------------------------------
// extract_code

TEST_CASE("extract_code returns the contents of a single fenced block") {
    CHECK(extract_code("```python\nx = 1\ny = 2\n```") == "x = 1\ny = 2");
    CHECK(extract_code("```\nx = 1\n```") == "x = 1");
}

TEST_CASE("extract_code picks the longest block out of several") {
    std::string raw =
        "Here is a sketch:\n```python\npass\n```\nAnd the full file:\n"
        "```python\ndef f():\n    return 42\n\nprint(f())\n```\nHope that helps!";
    CHECK(extract_code(raw) == "def f():\n    return 42\n\nprint(f())");
}

TEST_CASE("extract_code falls back to the trimmed response without fences") {
    CHECK(extract_code("\n\ndef f():\n    return 1\n\n") == "def f():\n    return 1");
    CHECK(extract_code("") == "");
}

TEST_CASE("extract_code treats an unterminated fence as running to the end") {
    CHECK(extract_code("intro\n```python\nx = 1\ny = 2") == "x = 1\ny = 2");
}

TEST_CASE("extract_code tie-break picks the first of equal-length blocks") {
    CHECK(extract_code("```\naa\n```\nmid\n```\nbb\n```") == "aa");
}

// ---------------------------------------------------------------------------
// strip_edit_comments

TEST_CASE("strip is the identity on code without EDIT comments") {
    std::string code = "def f(x):\n    # normal comment\n    return x\n";
    CHECK(strip_edit_comments(code) == code);
}

TEST_CASE("strip removes full-line EDIT comments") {
    CHECK(strip_edit_comments("# EDIT: add a function\nx = 1\n") == "x = 1\n");
    CHECK(strip_edit_comments("#EDIT: no space variant\nx = 1\n") == "x = 1\n");
    CHECK(strip_edit_comments("    # EDIT: indented\n    return x\n") == "    return x\n");
}

TEST_CASE("strip removes trailing EDIT comments and their whitespace") {
    CHECK(strip_edit_comments("return x  # EDIT: change to y\n") == "return x\n");
    CHECK(strip_edit_comments("return x\t# EDIT: tabbed\n") == "return x\n");
    // plain trailing comments survive
    CHECK(strip_edit_comments("return x  # keep me\n") == "return x  # keep me\n");
}

TEST_CASE("strip removes continuation comment lines after an EDIT line") {
    std::string annotated =
        "# EDIT: Create a helper.\n"
        "# 1. First, do this.\n"
        "# 2. Then, do that.\n"
        "def f():\n"
        "    return 1\n";
    CHECK(strip_edit_comments(annotated) == "def f():\n    return 1\n");
}

TEST_CASE("a blank line ends an EDIT block") {
    std::string annotated =
        "# EDIT: Create a helper.\n"
        "\n"
        "# original comment\n"
        "x = 1\n";
    CHECK(strip_edit_comments(annotated) == "\n# original comment\nx = 1\n");
}

TEST_CASE("shallower comments end an EDIT block") {
    std::string annotated =
        "def f():\n"
        "    # EDIT: change the return\n"
        "    # continuation at same indent\n"
        "# module-level comment\n"
        "    return 1\n";
    CHECK(strip_edit_comments(annotated) == "def f():\n# module-level comment\n    return 1\n");
}

TEST_CASE("strip recovers the appendix before-code from the annotated samples") {
    CHECK(norm(strip_edit_comments(appendix("b1_annotated.py"))) == norm(appendix("b1_before.py")));
    CHECK(norm(strip_edit_comments(appendix("b2_annotated.py"))) == norm(appendix("b2_before.py")));
}

TEST_CASE("count_edit_comments counts marked lines") {
    CHECK(count_edit_comments(appendix("b1_annotated.py")) == 3);
    CHECK(count_edit_comments(appendix("b2_annotated.py")) == 5);
    CHECK(count_edit_comments("x = 1\n") == 0);
    CHECK(count_edit_comments("x = 1  # EDIT: trailing\n") == 1);
}

TEST_CASE("strip/inject round-trip over randomized EDIT injections") {
    std::mt19937 rng(20240717);
    std::uniform_int_distribution<int> small(0, 3);
    auto random_code = [&](int lines) {
        std::vector<std::string> out;
        for (int i = 0; i < lines; ++i) {
            switch (small(rng)) {
                case 0: out.push_back("x" + std::to_string(i) + " = " + std::to_string(i)); break;
                case 1: out.push_back("    return x" + std::to_string(i)); break;
                case 2: out.push_back("def f" + std::to_string(i) + "():"); break;
                default: out.push_back(""); break;
            }
        }
        return out;
    };

    for (int iteration = 0; iteration < 1000; ++iteration) {
        std::vector<std::string> original = random_code(1 + iteration % 12);
        std::vector<std::string> annotated;
        for (const auto& line : original) {
            // inject an EDIT block before some lines (never before a comment)
            if (small(rng) == 0) {
                std::string indent(detail::indent_width(line), ' ');
                annotated.push_back(indent + "# EDIT: step " + std::to_string(iteration));
                int continuations = small(rng);
                for (int c = 0; c < continuations; ++c)
                    annotated.push_back(indent + "# " + std::to_string(c + 1) + ". detail");
            }
            if (!trim(line).empty() && small(rng) == 1) {
                annotated.push_back(line + "  # EDIT: inline note");
            } else {
                annotated.push_back(line);
            }
        }
        std::string original_text = join_lines(original) + "\n";
        std::string annotated_text = join_lines(annotated) + "\n";
        std::string stripped = strip_edit_comments(annotated_text);
        INFO("iteration " << iteration << "\nannotated:\n" << annotated_text);
        REQUIRE(norm(stripped) == norm(original_text));
    }
}

// ---------------------------------------------------------------------------
// validate_annotation

namespace {

AnnotationRecord record_for(const Problem& p, const std::string& annotated) {
    AnnotationRecord r;
    r.problem_id = p.id;
    r.variant = PromptVariant::lazy;
    r.annotated_code = annotated;
    r.annotator_name = "scripted-annotator";
    r.created_at = "2025-07-01T00:00:00Z";
    return r;
}

}  // namespace

TEST_CASE("validate_annotation accepts the appendix sample") {
    Problem p;
    p.id = "b1";
    p.name = "b1";
    p.before_code = appendix("b1_before.py");
    p.after_code = "-";
    auto report = validate_annotation(record_for(p, appendix("b1_annotated.py")), p);
    CHECK(report.stripped_matches_original);
    CHECK(report.edit_comment_count >= 3);
    CHECK(report.diagnostics.empty());
}

TEST_CASE("validate_annotation flags inlined code with the first differing line") {
    Problem p;
    p.id = "b1";
    p.name = "b1";
    p.before_code = "def f():\n    return 1\n";
    p.after_code = "-";
    std::string cheating = "def f():\n    return 2\n";
    auto report = validate_annotation(record_for(p, cheating), p, Strictness::lenient);
    CHECK_FALSE(report.stripped_matches_original);
    REQUIRE_FALSE(report.diagnostics.empty());
    CHECK(contains(report.diagnostics.front(), "line 2"));
    CHECK_THROWS_AS(validate_annotation(record_for(p, cheating), p, Strictness::strict),
                    ValidationError);
}

TEST_CASE("validation ignores trailing whitespace and trailing newlines") {
    Problem p;
    p.id = "x";
    p.name = "x";
    p.before_code = "x = 1";
    p.after_code = "-";
    auto report = validate_annotation(record_for(p, "x = 1  \n\n\n"), p);
    CHECK(report.stripped_matches_original);
}

// ---------------------------------------------------------------------------
// annotate + cache

TEST_CASE("annotate replays the appendix annotator output and caches it") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& csv = corpus[0];
    auto templates = cwall::test::load_templates();

    std::string annotated = appendix("b1_annotated.py");
    nlohmann::json fixture = {
        {"entries",
         {{{"contains", csv.before_code},
           {"responses", {{{"text", "```python\n" + annotated + "```"}}}}}}}};
    std::shared_ptr<ScriptedBackend> backend;
    Client annotator = scripted_client("scripted-annotator", BackendKind::chat, fixture, &backend);

    TempDir tmp;
    AnnotationStore store(tmp.path / "cache");
    SamplingParams params;
    params.max_new_tokens = 2048;

    AnnotationRecord record =
        annotate(csv, PromptVariant::descriptive, annotator, params, 100000, store, templates);
    CHECK(contains(record.annotated_code, "# EDIT: Define a new function here called `header`"));
    CHECK(backend->calls() == 1);

    // warm cache: no further backend calls
    AnnotationRecord again =
        annotate(csv, PromptVariant::descriptive, annotator, params, 100000, store, templates);
    CHECK(backend->calls() == 1);
    CHECK(again.annotated_code == record.annotated_code);

    // a fresh store over the same directory sees the persisted record
    AnnotationStore reloaded(tmp.path / "cache");
    CHECK(reloaded.find(csv.id, PromptVariant::descriptive, "scripted-annotator").has_value());
    annotate(csv, PromptVariant::descriptive, annotator, params, 100000, reloaded, templates);
    CHECK(backend->calls() == 1);
}

TEST_CASE("annotate fails cleanly on empty annotations and backend errors") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    auto templates = cwall::test::load_templates();
    TempDir tmp;
    SamplingParams params;

    nlohmann::json empty_fixture = {
        {"entries", {{{"any", true}, {"responses", {{{"text", "   \n  "}}}}}}}};
    Client empty_annotator = scripted_client("a", BackendKind::chat, empty_fixture);
    AnnotationStore store1(tmp.path / "c1");
    CHECK_THROWS_AS(annotate(corpus[0], PromptVariant::descriptive, empty_annotator, params, 100000,
                             store1, templates),
                    AnnotationError);

    nlohmann::json error_fixture = {
        {"entries", {{{"any", true}, {"responses", {{{"error", "down"}}}}}}}};
    Client error_annotator = scripted_client("a", BackendKind::chat, error_fixture);
    AnnotationStore store2(tmp.path / "c2");
    CHECK_THROWS_AS(annotate(corpus[0], PromptVariant::descriptive, error_annotator, params, 100000,
                             store2, templates),
                    AnnotationError);
}

// ---------------------------------------------------------------------------
// run_edit_stage

TEST_CASE("edit stage produces n attempts with distinct sample indices") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& p = corpus[0];
    auto templates = cwall::test::load_templates();
    Client editor = scripted_client("editor", BackendKind::chat,
                                    cwall::test::editor_fixture_for(corpus, {}));

    AnnotationRecord annotation = record_for(p, cwall::test::comment_only_annotation(p));
    EditStage stage = run_edit_stage(p, PromptVariant::descriptive, RunMode::chinese_wall,
                                     annotation, editor, SamplingParams{}, 20, templates);
    REQUIRE(stage.attempts.size() == 20);
    std::set<int> indices;
    for (const auto& a : stage.attempts) {
        indices.insert(a.sample_index);
        CHECK(a.problem_id == p.id);
        CHECK(a.mode == RunMode::chinese_wall);
        CHECK(a.extracted_code == p.after_code);
        CHECK_FALSE(a.outcome.has_value());
    }
    CHECK(indices.size() == 20);
}

TEST_CASE("the wall: the editor prompt carries the annotation and instruction, nothing else") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& p = corpus[0];
    auto templates = cwall::test::load_templates();
    Client editor = scripted_client("editor", BackendKind::chat,
                                    cwall::test::editor_fixture_for(corpus, {}));

    AnnotationRecord annotation = record_for(p, cwall::test::comment_only_annotation(p));
    // simulate annotator side-channel output that must never cross the wall
    annotation.created_at = "SECRET-TIMESTAMP";

    EditStage stage = run_edit_stage(p, PromptVariant::descriptive, RunMode::chinese_wall,
                                     annotation, editor, SamplingParams{}, 1, templates);
    const std::string& prompt = stage.prompt.messages.at(0).content;
    CHECK(contains(prompt, annotation.annotated_code));
    CHECK(contains(prompt, p.instruction_descriptive));
    CHECK_FALSE(contains(prompt, "SECRET-TIMESTAMP"));
    CHECK_FALSE(contains(prompt, annotation.annotator_name));
}

TEST_CASE("mode preconditions are enforced") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& p = corpus[0];
    auto templates = cwall::test::load_templates();
    Client editor = scripted_client("editor", BackendKind::chat,
                                    cwall::test::editor_fixture_for(corpus, {}));
    AnnotationRecord annotation = record_for(p, cwall::test::comment_only_annotation(p));

    CHECK_THROWS_AS(run_edit_stage(p, PromptVariant::descriptive, RunMode::baseline, annotation,
                                   editor, SamplingParams{}, 1, templates),
                    ContractError);
    CHECK_THROWS_AS(run_edit_stage(p, PromptVariant::descriptive, RunMode::chinese_wall,
                                   std::nullopt, editor, SamplingParams{}, 1, templates),
                    ContractError);
}

TEST_CASE("completion editors get the few-shot prompt") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& p = corpus[0];
    auto templates = cwall::test::load_templates();
    Client editor = scripted_client("base-editor", BackendKind::completion,
                                    cwall::test::editor_fixture_for(corpus, {}));
    AnnotationRecord annotation = record_for(p, cwall::test::comment_only_annotation(p));

    EditStage stage = run_edit_stage(p, PromptVariant::descriptive, RunMode::chinese_wall,
                                     annotation, editor, SamplingParams{}, 2, templates);
    CHECK(stage.prompt.kind == PromptKind::completion);
    CHECK(contains(stage.prompt.prompt_text, "## Code Before:"));
    CHECK(contains(stage.prompt.prompt_text, annotation.annotated_code));
    CHECK(stage.attempts.size() == 2);
}

TEST_CASE("baseline mode uses the original code, not an annotation") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& p = corpus[0];
    auto templates = cwall::test::load_templates();
    Client editor = scripted_client("editor", BackendKind::chat,
                                    cwall::test::editor_fixture_for(corpus, {}));

    EditStage stage = run_edit_stage(p, PromptVariant::lazy, RunMode::baseline, std::nullopt,
                                     editor, SamplingParams{}, 1, templates);
    const std::string& prompt = stage.prompt.messages.at(0).content;
    CHECK(contains(prompt, p.before_code));
    CHECK(contains(prompt, p.instruction_lazy));
    CHECK_FALSE(contains(prompt, "EDIT:"));
}

TEST_CASE("per-slot generation failures leave empty extracted code") {
    auto corpus = load_corpus(cwall::test::fixture_corpus_path());
    const Problem& p = corpus[0];
    auto templates = cwall::test::load_templates();
    nlohmann::json fixture = {
        {"entries",
         {{{"any", true},
           {"responses", {{{"text", "```python\nx = 1\n```"}}, {{"error", "slot failure"}}}}}}}};
    Client editor = scripted_client("editor", BackendKind::chat, fixture);

    EditStage stage = run_edit_stage(p, PromptVariant::descriptive, RunMode::baseline, std::nullopt,
                                     editor, SamplingParams{}, 2, templates);
    REQUIRE(stage.attempts.size() == 2);
    CHECK(stage.attempts[0].extracted_code == "x = 1");
    CHECK(stage.attempts[1].extracted_code.empty());
    CHECK(contains(stage.attempts[1].generation_error, "slot failure"));
}

TEST_CASE("attempts round-trip through json") {
    EditAttempt a;
    a.problem_id = "p";
    a.variant = PromptVariant::lazy;
    a.mode = RunMode::baseline;
    a.editor_name = "e";
    a.sample_index = 7;
    a.raw_response = "```python\nx\n```";
    a.extracted_code = "x";
    ExecutionOutcome o;
    o.status = ExecStatus::pass;
    o.exit_code = 0;
    o.duration_seconds = 0.25;
    o.covered_lines = std::set<int>{1, 2};
    o.executable_lines = std::set<int>{1, 2, 3};
    a.outcome = o;

    EditAttempt round = attempt_from_json(nlohmann::json::parse(attempt_to_json(a).dump()));
    CHECK(round.problem_id == a.problem_id);
    CHECK(round.variant == a.variant);
    CHECK(round.mode == a.mode);
    CHECK(round.sample_index == a.sample_index);
    CHECK(round.extracted_code == a.extracted_code);
    REQUIRE(round.outcome.has_value());
    CHECK(round.outcome->status == ExecStatus::pass);
    CHECK(round.outcome->covered_lines == o.covered_lines);
    CHECK(round.outcome->executable_lines == o.executable_lines);
}
