#pragma once

// Small shared utilities: error types, string/file helpers, hashing,
// fixed-point display formatting and a bounded worker pool.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cwall {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Error hierarchy. Every failure the harness raises derives from Error so
// callers can catch the whole family at stage boundaries.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
// Violated call contract (argument range, mode exclusivity, ...).
struct ContractError : Error {
    using Error::Error;
};
struct TransportError : Error {
    bool retryable = true;
    explicit TransportError(const std::string& msg, bool retry = true)
        : Error(msg), retryable(retry) {}
};
struct BackendError : Error {
    int status = 0;
    explicit BackendError(const std::string& msg, int http_status = 0)
        : Error(msg), status(http_status) {}
};
struct ProtocolError : Error {
    using Error::Error;
};
struct AnnotationError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
// Executor toolchain missing or unusable; distinct from a failing candidate.
struct EnvironmentError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Strings

inline std::string rtrim(std::string_view s) {
    size_t end = s.size();
    while (end > 0 && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r' ||
                       s[end - 1] == '\n'))
        --end;
    return std::string(s.substr(0, end));
}

inline std::string trim(std::string_view s) {
    size_t begin = 0;
    while (begin < s.size() && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    size_t end = s.size();
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

// Splits on '\n'. A trailing newline does not produce a final empty element;
// "a\nb\n" and "a\nb" both give {"a", "b"}.
inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            if (pos < text.size()) lines.emplace_back(text.substr(pos));
            break;
        }
        lines.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (pos == text.size()) break;
    }
    return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size()) out += '\n';
    }
    return out;
}

// Strips leading/trailing blank lines, keeps interior bytes untouched.
inline std::string trim_blank_lines(const std::string& text) {
    auto lines = split_lines(text);
    size_t begin = 0, end = lines.size();
    while (begin < end && trim(lines[begin]).empty()) ++begin;
    while (end > begin && trim(lines[end - 1]).empty()) --end;
    std::vector<std::string> kept(lines.begin() + begin, lines.begin() + end);
    return join_lines(kept);
}

inline bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

inline std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    if (from.empty()) return text;
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write: " + path.string());
}

inline void append_line(const fs::path& path, std::string_view line) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to file: " + path.string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    if (!out) throw IoError("short write: " + path.string());
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a 64-bit): stable keys for prompts and cache filenames.

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v, int width = 16) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%0*llx", width, static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Filesystem-safe rendition of an arbitrary identifier.
inline std::string sanitize_for_filename(std::string_view id) {
    std::string out;
    out.reserve(id.size());
    for (char c : id) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    if (out.empty()) out = "_";
    return out;
}

// ---------------------------------------------------------------------------
// Display formatting: two decimals, half-up, independent of FP print modes.

inline std::string format_fixed2(double value) {
    bool neg = value < 0;
    double mag = neg ? -value : value;
    long long scaled = static_cast<long long>(mag * 100.0 + 0.5);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%02lld", neg && scaled != 0 ? "-" : "", scaled / 100,
                  scaled % 100);
    return std::string(buf);
}

inline std::string iso8601_utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

// Keeps at most `limit` trailing bytes, marking truncation at the front.
inline void append_bounded_tail(std::string& tail, std::string_view chunk, size_t limit) {
    tail.append(chunk);
    if (tail.size() > limit) tail.erase(0, tail.size() - limit);
}

// ---------------------------------------------------------------------------
// Parallel map over an index range. Exceptions propagate after all workers
// drain; `fn` must capture per-item failures it wants recorded instead.

inline void parallel_for(size_t count, unsigned workers, const std::function<void(size_t)>& fn) {
    if (count == 0) return;
    if (workers <= 1 || count == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    unsigned n = std::min<size_t>(workers, count);
    for (unsigned w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace cwall
