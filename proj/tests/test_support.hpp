#pragma once

// Shared helpers for the test suites: fixture locations, temp directories,
// and scripted-backend builders used by the pipeline and runner tests.

#include <unistd.h>

#include <atomic>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cwall/cwall.hpp"

namespace cwall::test {

inline fs::path fixture_dir() { return fs::path(CWALL_TEST_FIXTURES); }
inline fs::path asset_dir() { return fs::path(CWALL_ASSETS); }

inline fs::path fixture_corpus_path() { return fixture_dir() / "corpus" / "fixture5.jsonl"; }

inline TemplateSet load_templates() { return TemplateSet::load(asset_dir()); }

// Self-cleaning scratch directory.
struct TempDir {
    fs::path path;
    TempDir() {
        auto base = fs::temp_directory_path() / "cwall-tests";
        fs::create_directories(base);
        static std::atomic<int> counter{0};
        path = base / ("t" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

inline BackendSpec scripted_spec(const std::string& name, BackendKind kind) {
    BackendSpec spec;
    spec.name = name;
    spec.kind = kind;
    spec.endpoint = "scripted";
    spec.script_fixture = "<in-memory>";
    return spec;
}

inline Client scripted_client(const std::string& name, BackendKind kind,
                              const nlohmann::json& fixture,
                              std::shared_ptr<ScriptedBackend>* out_backend = nullptr) {
    auto backend = std::make_shared<ScriptedBackend>(scripted_spec(name, kind), fixture);
    if (out_backend != nullptr) *out_backend = backend;
    return Client(backend);
}

// Comment-only annotation: an EDIT block prepended to the original code, so
// stripping recovers the input and the code stays contiguous for substring
// matching.
inline std::string comment_only_annotation(const Problem& problem) {
    std::string marker = comment_markers(problem.subject_language).front();
    return marker + " EDIT: Apply the change requested for " + problem.id + " below.\n" +
           problem.before_code;
}

// Annotator fixture covering every problem in the corpus, keyed by each
// problem's own before code.
inline nlohmann::json annotator_fixture_for(const std::vector<Problem>& corpus) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& p : corpus) {
        entries.push_back({{"contains", p.before_code},
                           {"responses", {{{"text", comment_only_annotation(p)}}}}});
    }
    return {{"entries", entries}};
}

// Editor fixture returning the gold after code for every problem except the
// ones listed in broken_ids, which get code that cannot pass the tests.
inline nlohmann::json editor_fixture_for(const std::vector<Problem>& corpus,
                                         const std::set<std::string>& broken_ids) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& p : corpus) {
        std::string reply;
        if (broken_ids.count(p.id)) {
            reply = "```python\ndef broken_placeholder():\n    return None\n```";
        } else {
            reply = "```python\n" + p.after_code + "\n```";
        }
        entries.push_back({{"contains", p.before_code}, {"responses", {{{"text", reply}}}}});
    }
    return {{"entries", entries}};
}

}  // namespace cwall::test
