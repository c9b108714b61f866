#pragma once

// Converts an upstream benchmark checkout into the harness corpus format.
// Two layouts are recognized:
//   - a dataset file (.json array or .jsonl) with the upstream field names
//     (id, full_name, before, after, tests, instruction_descriptive,
//     instruction_lazy);
//   - a directory of per-problem subdirectories holding before.py, after.py,
//     tests.py and descriptive/lazy instruction text files.

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

#include "cwall/corpus.hpp"
#include "cwall/util.hpp"

namespace cwall {

namespace detail {

inline std::string upstream_string(const nlohmann::json& rec, const char* field,
                                   const std::string& origin) {
    if (!rec.contains(field))
        throw FormatError("import: entry '" + origin + "' is missing field \"" + field + "\"");
    const auto& v = rec.at(field);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw FormatError("import: entry '" + origin + "' field \"" + field + "\" is not text");
}

inline Problem upstream_record_to_problem(const nlohmann::json& rec, size_t index) {
    std::string origin = "record " + std::to_string(index);
    Problem p;
    p.id = upstream_string(rec, "id", origin);
    p.name = rec.contains("full_name") ? upstream_string(rec, "full_name", origin)
             : rec.contains("name")    ? upstream_string(rec, "name", origin)
                                       : p.id;
    p.before_code = upstream_string(rec, "before", origin);
    p.after_code = upstream_string(rec, "after", origin);
    p.test_suite = upstream_string(rec, "tests", origin);
    p.instruction_descriptive = upstream_string(rec, "instruction_descriptive", origin);
    p.instruction_lazy = upstream_string(rec, "instruction_lazy", origin);
    if (p.before_code == p.after_code)
        throw FormatError("import: entry '" + origin + "' has identical before/after code");
    return p;
}

inline std::string read_first_existing(const fs::path& dir, const std::vector<std::string>& names,
                                       const std::string& what) {
    for (const auto& name : names) {
        if (fs::exists(dir / name)) return read_file(dir / name);
    }
    std::string tried;
    for (const auto& name : names) tried += (tried.empty() ? "" : ", ") + name;
    throw FormatError("import: entry '" + dir.filename().string() + "' has no " + what +
                      " file (tried " + tried + ")");
}

}  // namespace detail

inline std::vector<Problem> import_upstream(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("import: path does not exist: " + path.string());

    std::vector<Problem> problems;
    if (fs::is_regular_file(path)) {
        std::string content = read_file(path);
        if (trim(content).empty()) throw FormatError("import: dataset file is empty: " + path.string());
        if (trim(content).front() == '[') {
            auto doc = nlohmann::json::parse(content);
            size_t index = 0;
            for (const auto& rec : doc)
                problems.push_back(detail::upstream_record_to_problem(rec, index++));
        } else {
            size_t index = 0;
            for (const auto& line : split_lines(content)) {
                if (trim(line).empty()) continue;
                problems.push_back(
                    detail::upstream_record_to_problem(nlohmann::json::parse(line), index++));
            }
        }
    } else {
        std::vector<fs::path> entries;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_directory()) entries.push_back(entry.path());
        std::sort(entries.begin(), entries.end());
        if (entries.empty())
            throw FormatError("import: no problem directories under " + path.string());
        for (const auto& dir : entries) {
            Problem p;
            p.id = dir.filename().string();
            p.name = p.id;
            p.before_code = detail::read_first_existing(dir, {"before.py"}, "before");
            p.after_code = detail::read_first_existing(dir, {"after.py"}, "after");
            p.test_suite = detail::read_first_existing(dir, {"tests.py", "test.py"}, "tests");
            p.instruction_descriptive = trim(detail::read_first_existing(
                dir, {"descriptive.txt", "descriptive.md"}, "descriptive instruction"));
            p.instruction_lazy =
                trim(detail::read_first_existing(dir, {"lazy.txt", "lazy.md"}, "lazy instruction"));
            if (p.before_code == p.after_code)
                throw FormatError("import: entry '" + p.id + "' has identical before/after code");
            problems.push_back(std::move(p));
        }
    }

    std::set<std::string> ids;
    for (const auto& p : problems)
        if (!ids.insert(p.id).second) throw FormatError("import: duplicate problem id '" + p.id + "'");
    return problems;
}

}  // namespace cwall
