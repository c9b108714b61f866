#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace cwall;
using cwall::test::TempDir;

namespace {

Problem csv_problem() { return load_corpus(cwall::test::fixture_corpus_path())[0]; }

std::string golden(const std::string& name) {
    return read_file(cwall::test::fixture_dir() / "golden" / name);
}

}  // namespace

TEST_CASE("annotator prompt carries the teacher block, instruction and code") {
    auto templates = cwall::test::load_templates();
    Problem p = csv_problem();
    RenderedPrompt prompt = render_annotator(templates, p, PromptVariant::descriptive);

    REQUIRE(prompt.kind == PromptKind::chat);
    REQUIRE(prompt.messages.size() == 1);
    CHECK(prompt.messages[0].role == ChatRole::user);
    const std::string& text = prompt.messages[0].content;
    CHECK(contains(text, "You are CTeacherGPT"));
    CHECK(contains(text, "You must not complete the task"));
    CHECK(contains(text, "Your comment must starts with `EDIT:`"));
    CHECK(contains(text, "EDIT:"));
    CHECK(contains(text, "Add a function called `header`"));
    CHECK(contains(text, p.before_code));
}

TEST_CASE("annotator render is deterministic and matches the golden file") {
    auto templates = cwall::test::load_templates();
    Problem p = csv_problem();
    auto first = render_annotator(templates, p, PromptVariant::descriptive);
    auto second = render_annotator(templates, p, PromptVariant::descriptive);
    CHECK(first.messages[0].content == second.messages[0].content);
    CHECK(first.messages[0].content == golden("annotator_descriptive.txt"));
}

TEST_CASE("variants differ only in the instruction substring") {
    auto templates = cwall::test::load_templates();
    Problem p = csv_problem();
    std::string descriptive =
        render_annotator(templates, p, PromptVariant::descriptive).messages[0].content;
    std::string lazy = render_annotator(templates, p, PromptVariant::lazy).messages[0].content;
    CHECK(descriptive != lazy);
    CHECK(replace_all(descriptive, p.instruction_descriptive, p.instruction_lazy) == lazy);
}

TEST_CASE("before_code is embedded byte-for-byte even when it looks like markup") {
    auto templates = cwall::test::load_templates();
    Problem p = csv_problem();
    p.before_code = "## Code\n{{code}}\n## Instruction:\n```python\nx = 1\n```";
    auto prompt = render_annotator(templates, p, PromptVariant::descriptive);
    CHECK(contains(prompt.messages[0].content, p.before_code));
    auto editor = render_instruct_editor(templates, p.before_code, std::nullopt);
    CHECK(contains(editor.messages[0].content, p.before_code));
}

TEST_CASE("instruct editor prompt with and without the problem description") {
    auto templates = cwall::test::load_templates();
    std::string annotated = read_file(cwall::test::fixture_dir() / "appendix" / "b1_annotated.py");
    Problem p = csv_problem();

    auto demo = render_instruct_editor(templates, annotated, std::nullopt);
    auto benchmark = render_instruct_editor(templates, annotated, p.instruction_descriptive);
    const std::string& demo_text = demo.messages[0].content;
    const std::string& bench_text = benchmark.messages[0].content;

    CHECK(contains(demo_text, "Update this code by following the instruction"));
    CHECK(contains(demo_text, "Only produce the code, do not include any additional prose"));
    CHECK(contains(demo_text, annotated));
    CHECK_FALSE(contains(demo_text, p.instruction_descriptive));

    CHECK(contains(bench_text, annotated));
    CHECK(contains(bench_text, p.instruction_descriptive));
    CHECK(demo_text != bench_text);
    // identical apart from the instruction section
    std::string section = "## Instruction\n" + p.instruction_descriptive + "\n\n";
    CHECK(replace_all(bench_text, section, "") == demo_text);

    CHECK(demo_text == golden("editor_instruct_demo.txt"));
    CHECK(bench_text == golden("editor_instruct_benchmark.txt"));
}

TEST_CASE("base editor prompt is the one-shot exemplar plus the task") {
    auto templates = cwall::test::load_templates();
    std::string annotated = read_file(cwall::test::fixture_dir() / "appendix" / "b1_annotated.py");
    Problem p = csv_problem();
    auto prompt = render_base_editor(templates, annotated, p.instruction_descriptive);

    REQUIRE(prompt.kind == PromptKind::completion);
    CHECK(contains(prompt.prompt_text, "def add(x, y):"));
    CHECK(contains(prompt.prompt_text, "def sub(x, y):"));
    CHECK(contains(prompt.prompt_text, annotated));
    CHECK(prompt.prompt_text.ends_with("## Code After:"));
    REQUIRE_FALSE(prompt.stop_sequences.empty());
    CHECK(std::find(prompt.stop_sequences.begin(), prompt.stop_sequences.end(), "\n## ") !=
          prompt.stop_sequences.end());
    CHECK(prompt.prompt_text == golden("editor_base.txt"));
}

TEST_CASE("baseline prompts use the direct editing shape") {
    auto templates = cwall::test::load_templates();
    Problem p = csv_problem();
    auto chat = render_baseline_editor(templates, PromptKind::chat, p.before_code,
                                       p.instruction_descriptive);
    CHECK(contains(chat.messages[0].content, "## Code Before:"));
    CHECK(contains(chat.messages[0].content, p.before_code));
    CHECK(contains(chat.messages[0].content, p.instruction_descriptive));
    CHECK(chat.messages[0].content == golden("baseline_instruct.txt"));

    auto completion = render_baseline_editor(templates, PromptKind::completion, p.before_code,
                                             p.instruction_descriptive);
    CHECK(completion.prompt_text.ends_with("## Code After:"));
    CHECK(contains(completion.prompt_text, p.before_code));
}

TEST_CASE("prompt keys are stable and distinguish prompts") {
    auto templates = cwall::test::load_templates();
    Problem p = csv_problem();
    auto a = render_annotator(templates, p, PromptVariant::descriptive);
    auto b = render_annotator(templates, p, PromptVariant::lazy);
    CHECK(prompt_key(a) == prompt_key(a));
    CHECK(prompt_key(a) != prompt_key(b));
}

TEST_CASE("template loading reports missing assets") {
    TempDir tmp;
    CHECK_THROWS_AS(TemplateSet::load(tmp.path), ConfigError);
}

TEST_CASE("unbalanced template blocks are format errors") {
    CHECK_THROWS_AS(detail::render_template("a\n{{#x}}\nb\n", {{"x", std::nullopt}}), FormatError);
    CHECK_THROWS_AS(detail::render_template("{{/x}}\n", {}), FormatError);
}
