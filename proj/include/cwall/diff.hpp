#pragma once

// Whole-line diff on top of a longest-common-subsequence match. Only the
// edited side's changed lines are needed (a modified line counts once; the
// paired deletion is ignored).

#include <string>
#include <unordered_map>
#include <vector>

#include "cwall/util.hpp"

namespace cwall {

namespace detail {

inline std::vector<int> intern_lines(const std::vector<std::string>& lines,
                                     std::unordered_map<std::string, int>& table) {
    std::vector<int> ids;
    ids.reserve(lines.size());
    for (const auto& line : lines) {
        auto [it, inserted] = table.try_emplace(line, int(table.size()));
        ids.push_back(it->second);
    }
    return ids;
}

}  // namespace detail

// 1-based numbers of lines in `edited` that are not part of an LCS match
// with `before` — i.e. lines added or modified by the edit.
inline std::vector<int> changed_lines_in_edited(const std::string& before,
                                                const std::string& edited) {
    std::unordered_map<std::string, int> table;
    std::vector<int> a = detail::intern_lines(split_lines(before), table);
    std::vector<int> b = detail::intern_lines(split_lines(edited), table);

    // Common prefix/suffix are trivially matched; the DP runs on the core.
    size_t prefix = 0;
    while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
    size_t suffix = 0;
    while (suffix + prefix < a.size() && suffix + prefix < b.size() &&
           a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix])
        ++suffix;
    size_t n = a.size() - prefix - suffix;
    size_t m = b.size() - prefix - suffix;

    if (n * m > size_t(50'000'000))
        throw ContractError("line diff too large: " + std::to_string(n) + " x " +
                            std::to_string(m) + " lines");

    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            if (a[prefix + i - 1] == b[prefix + j - 1])
                lcs[i][j] = lcs[i - 1][j - 1] + 1;
            else
                lcs[i][j] = std::max(lcs[i - 1][j], lcs[i][j - 1]);
        }
    }

    std::vector<bool> matched(m, false);
    size_t i = n, j = m;
    while (i > 0 && j > 0) {
        if (a[prefix + i - 1] == b[prefix + j - 1]) {
            matched[j - 1] = true;
            --i;
            --j;
        } else if (lcs[i - 1][j] >= lcs[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }

    std::vector<int> changed;
    for (size_t k = 0; k < m; ++k) {
        if (!matched[k]) changed.push_back(int(prefix + k) + 1);
    }
    return changed;
}

}  // namespace cwall
