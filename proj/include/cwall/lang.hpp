#pragma once

// Subject-language tag shared by the corpus, the executor toolchain table and
// the comment-stripping logic.

#include <string>
#include <vector>

#include "cwall/util.hpp"

namespace cwall {

enum class SubjectLanguage { python, c };

inline std::string to_string(SubjectLanguage lang) {
    switch (lang) {
        case SubjectLanguage::python: return "python";
        case SubjectLanguage::c: return "c";
    }
    return "python";
}

inline SubjectLanguage subject_language_from_string(const std::string& s) {
    if (s == "python") return SubjectLanguage::python;
    if (s == "c") return SubjectLanguage::c;
    throw FormatError("unknown subject_language: '" + s + "'");
}

// Line-comment markers used when recognizing EDIT comments.
inline std::vector<std::string> comment_markers(SubjectLanguage lang) {
    switch (lang) {
        case SubjectLanguage::python: return {"#"};
        case SubjectLanguage::c: return {"//"};
    }
    return {"#"};
}

inline std::string source_extension(SubjectLanguage lang) {
    switch (lang) {
        case SubjectLanguage::python: return ".py";
        case SubjectLanguage::c: return ".c";
    }
    return ".txt";
}

}  // namespace cwall
