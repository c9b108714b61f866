#pragma once

// Prompt templates for the three model roles: the annotator that writes
// EDIT comments, the chat editor, and the few-shot completion editor, plus
// the upstream-style direct-editing prompts used in baseline mode.
//
// Templates are plain UTF-8 asset files. Placeholder syntax:
//   {{instruction}}, {{code}}          substituted verbatim, no escaping
//   {{#instruction}} ... {{/instruction}}   lines kept only when the value
//                                            is present; marker lines removed

#include <optional>
#include <string>
#include <vector>

#include "cwall/corpus.hpp"
#include "cwall/util.hpp"

namespace cwall {

enum class PromptKind { chat, completion };
enum class ChatRole { system, user, assistant };

inline std::string to_string(ChatRole role) {
    switch (role) {
        case ChatRole::system: return "system";
        case ChatRole::user: return "user";
        case ChatRole::assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    ChatRole role = ChatRole::user;
    std::string content;
};

struct RenderedPrompt {
    PromptKind kind = PromptKind::chat;
    std::vector<ChatMessage> messages;
    std::string prompt_text;
    std::vector<std::string> stop_sequences;

    // Stable text for fixture matching and cache keys.
    std::string canonical_text() const {
        if (kind == PromptKind::completion) return prompt_text;
        std::string out;
        for (const auto& m : messages) {
            out += to_string(m.role);
            out += ":\n";
            out += m.content;
            out += '\n';
        }
        return out;
    }
};

inline std::string prompt_key(const RenderedPrompt& prompt) {
    return to_hex(fnv1a64(prompt.canonical_text()));
}

inline RenderedPrompt make_chat_prompt(std::string user_content,
                                       std::vector<std::string> stops = {}) {
    if (trim(user_content).empty())
        throw ContractError("chat prompt: user message content must be non-empty");
    RenderedPrompt p;
    p.kind = PromptKind::chat;
    p.messages.push_back(ChatMessage{ChatRole::user, std::move(user_content)});
    p.stop_sequences = std::move(stops);
    return p;
}

inline RenderedPrompt make_completion_prompt(std::string text, std::vector<std::string> stops) {
    RenderedPrompt p;
    p.kind = PromptKind::completion;
    p.prompt_text = std::move(text);
    p.stop_sequences = std::move(stops);
    return p;
}

// Base-model generations are cut before any new line-initial section header.
inline const char* kSectionStopSequence = "\n## ";

namespace detail {

// Resolves {{#name}}/{{/name}} blocks line-wise, then substitutes
// placeholders. Substitution is byte-verbatim: code that looks like headings
// or contains {{ braces }} passes through untouched.
inline std::string render_template(const std::string& tmpl,
                                   const std::vector<std::pair<std::string, std::optional<std::string>>>& vars) {
    std::string kept;
    kept.reserve(tmpl.size());
    size_t pos = 0;
    std::vector<bool> include_stack;
    auto included = [&] {
        for (bool b : include_stack)
            if (!b) return false;
        return true;
    };
    while (pos < tmpl.size()) {
        size_t nl = tmpl.find('\n', pos);
        size_t end = nl == std::string::npos ? tmpl.size() : nl + 1;
        std::string_view segment(tmpl.data() + pos, end - pos);
        std::string_view line = segment;
        if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
        bool is_marker = false;
        if (line.size() > 5 && line.substr(0, 3) == "{{#" && line.substr(line.size() - 2) == "}}") {
            std::string name(line.substr(3, line.size() - 5));
            bool present = false;
            for (const auto& [key, value] : vars)
                if (key == name) present = value.has_value();
            include_stack.push_back(present);
            is_marker = true;
        } else if (line.size() > 5 && line.substr(0, 3) == "{{/" &&
                   line.substr(line.size() - 2) == "}}") {
            if (include_stack.empty())
                throw FormatError("template: unmatched closing block marker: " + std::string(line));
            include_stack.pop_back();
            is_marker = true;
        }
        if (!is_marker && included()) kept.append(segment);
        pos = end;
    }
    if (!include_stack.empty()) throw FormatError("template: unclosed block marker");

    for (const auto& [key, value] : vars)
        kept = replace_all(kept, "{{" + key + "}}", value.value_or(""));
    return kept;
}

}  // namespace detail

struct TemplateSet {
    std::string annotator;
    std::string editor_instruct;
    std::string editor_base;
    std::string baseline_instruct;
    std::string baseline_base;

    static TemplateSet load(const fs::path& dir) {
        auto read = [&](const char* name) {
            fs::path p = dir / name;
            if (!fs::exists(p)) throw ConfigError("template asset missing: " + p.string());
            return read_file(p);
        };
        TemplateSet t;
        t.annotator = read("annotator.txt");
        t.editor_instruct = read("editor_instruct.txt");
        t.editor_base = read("editor_base.txt");
        t.baseline_instruct = read("baseline_instruct.txt");
        t.baseline_base = read("baseline_base.txt");
        return t;
    }
};

// Annotator prompt: the CTeacherGPT instruction block followed by the
// problem's instruction (per variant) and its before code.
inline RenderedPrompt render_annotator(const TemplateSet& templates, const Problem& problem,
                                       PromptVariant variant) {
    std::string body = detail::render_template(
        templates.annotator,
        {{"instruction", problem.instruction(variant)}, {"code", problem.before_code}});
    return make_chat_prompt(std::move(body));
}

// Chat editor prompt. `instruction` present = benchmark mode (the problem
// description rides along); absent = annotated code only.
inline RenderedPrompt render_instruct_editor(const TemplateSet& templates,
                                             const std::string& annotated_code,
                                             const std::optional<std::string>& instruction) {
    if (annotated_code.empty())
        throw ContractError("render_instruct_editor: annotated code must be non-empty");
    std::string body = detail::render_template(templates.editor_instruct,
                                               {{"instruction", instruction}, {"code", annotated_code}});
    return make_chat_prompt(std::move(body));
}

// Few-shot completion prompt for base models; ends right after the final
// "## Code After:" line so generation continues with the edited code.
inline RenderedPrompt render_base_editor(const TemplateSet& templates,
                                         const std::string& annotated_code,
                                         const std::string& instruction) {
    if (annotated_code.empty() || instruction.empty())
        throw ContractError("render_base_editor: code and instruction must be non-empty");
    std::string body = detail::render_template(templates.editor_base,
                                               {{"instruction", instruction}, {"code", annotated_code}});
    return make_completion_prompt(std::move(body), {kSectionStopSequence});
}

// Baseline (no annotation) prompts in the upstream benchmark's direct
// editing shape. Asset files; replace with the upstream text when importing
// from a checkout that carries its own prompts.
inline RenderedPrompt render_baseline_editor(const TemplateSet& templates, PromptKind kind,
                                             const std::string& before_code,
                                             const std::string& instruction) {
    if (before_code.empty() || instruction.empty())
        throw ContractError("render_baseline_editor: code and instruction must be non-empty");
    if (kind == PromptKind::chat) {
        std::string body = detail::render_template(templates.baseline_instruct,
                                                   {{"instruction", instruction}, {"code", before_code}});
        return make_chat_prompt(std::move(body));
    }
    std::string body = detail::render_template(templates.baseline_base,
                                               {{"instruction", instruction}, {"code", before_code}});
    return make_completion_prompt(std::move(body), {kSectionStopSequence});
}

}  // namespace cwall
