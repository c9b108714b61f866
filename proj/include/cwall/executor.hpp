#pragma once

// Runs candidate programs against a problem's test suite in an isolated
// subprocess: fresh temp directory, process-group kill on timeout, bounded
// output capture, optional line coverage through an external tracer command.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cwall/lang.hpp"
#include "cwall/util.hpp"

namespace cwall {

enum class ExecStatus { pass, fail, timeout, error };

inline std::string to_string(ExecStatus s) {
    switch (s) {
        case ExecStatus::pass: return "pass";
        case ExecStatus::fail: return "fail";
        case ExecStatus::timeout: return "timeout";
        case ExecStatus::error: return "error";
    }
    return "error";
}

inline ExecStatus exec_status_from_string(const std::string& s) {
    if (s == "pass") return ExecStatus::pass;
    if (s == "fail") return ExecStatus::fail;
    if (s == "timeout") return ExecStatus::timeout;
    if (s == "error") return ExecStatus::error;
    throw FormatError("unknown execution status: '" + s + "'");
}

struct ExecutionOutcome {
    ExecStatus status = ExecStatus::error;
    std::optional<int> exit_code;
    double duration_seconds = 0.0;
    std::string stdout_tail;
    std::string stderr_tail;
    std::optional<std::set<int>> covered_lines;
    std::optional<std::set<int>> executable_lines;
    std::string diagnostic;
    // Set when the failure is the harness environment's fault (missing
    // toolchain, spawn failure), never for candidate misbehavior.
    bool env_failure = false;

    bool passed() const { return status == ExecStatus::pass; }
    bool has_coverage() const { return covered_lines.has_value() && executable_lines.has_value(); }
};

// Command templates. Placeholders: {entry} test entry file, {target} file
// coverage is measured on, {report} coverage report path, {tracer} path of
// the materialized tracer script.
struct ExecToolchain {
    std::vector<std::string> run;       // e.g. {"python3", "{entry}"}
    std::vector<std::string> check;     // optional pre-run compile check
    std::vector<std::string> coverage;  // empty -> coverage unavailable
};

enum class FileLayout { single_file, two_file };

// Dependency-free line tracer for Python candidates. Runs the entry script,
// records line events for the target file, and writes a JSON report with
// "executable_lines" and "covered_lines" even when the program fails.
inline const char* python_tracer_source() {
    return R"PYTRACER(import argparse, json, os, sys, threading


def executable_lines(path):
    with open(path, "rb") as fh:
        source = fh.read()
    code = compile(source, path, "exec")
    lines = set()
    stack = [code]
    while stack:
        co = stack.pop()
        for _start, _end, line in co.co_lines():
            if line is not None:
                lines.add(line)
        for const in co.co_consts:
            if isinstance(const, type(co)):
                stack.append(const)
    return lines


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--report", required=True)
    ap.add_argument("--target", required=True)
    ap.add_argument("entry")
    args = ap.parse_args()

    target = os.path.abspath(args.target)
    entry = os.path.abspath(args.entry)
    executable = set()
    covered = set()
    exit_code = 0

    def tracer(frame, event, arg):
        if event == "line" and frame.f_code.co_filename == target:
            covered.add(frame.f_lineno)
        return tracer

    try:
        executable = executable_lines(target)
        with open(entry, "rb") as fh:
            source = fh.read()
        code = compile(source, entry, "exec")
        globs = {"__name__": "__main__", "__file__": entry, "__builtins__": __builtins__}
        threading.settrace(tracer)
        sys.settrace(tracer)
        try:
            exec(code, globs)
        finally:
            sys.settrace(None)
            threading.settrace(None)
    except SystemExit as exc:
        if exc.code is None:
            exit_code = 0
        elif isinstance(exc.code, int):
            exit_code = exc.code
        else:
            sys.stderr.write(str(exc.code) + "\n")
            exit_code = 1
    except BaseException:
        import traceback

        traceback.print_exc()
        exit_code = 1

    report = {
        "target": target,
        "executable_lines": sorted(executable),
        "covered_lines": sorted(covered & executable),
    }
    with open(args.report, "w") as fh:
        json.dump(report, fh)
    sys.exit(exit_code)


main()
)PYTRACER";
}

inline std::map<SubjectLanguage, ExecToolchain> default_toolchains() {
    std::map<SubjectLanguage, ExecToolchain> t;
    t[SubjectLanguage::python] = ExecToolchain{
        {"python3", "{entry}"},
        {"python3", "-m", "py_compile", "{entry}"},
        {"python3", "{tracer}", "--report", "{report}", "--target", "{target}", "{entry}"},
    };
    return t;
}

struct ExecConfig {
    std::map<SubjectLanguage, ExecToolchain> toolchains = default_toolchains();
    std::chrono::milliseconds timeout{15000};
    FileLayout layout = FileLayout::single_file;
    bool keep_temp = false;
    size_t tail_limit = 8192;
    fs::path work_root;  // empty -> system temp dir
};

namespace detail {

struct RawExec {
    int exit_code = 0;
    bool timed_out = false;
    bool spawn_failed = false;
    std::string spawn_error;
    std::string stdout_tail;
    std::string stderr_tail;
    double seconds = 0.0;
};

// fork/exec with its own process group so a timeout can kill the whole tree.
inline RawExec run_process(const std::vector<std::string>& argv, const fs::path& cwd,
                           std::chrono::milliseconds timeout, size_t tail_limit) {
    RawExec result;
    if (argv.empty()) {
        result.spawn_failed = true;
        result.spawn_error = "empty command";
        return result;
    }
    int out_pipe[2], err_pipe[2], exec_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0 || pipe(exec_pipe) != 0) {
        result.spawn_failed = true;
        result.spawn_error = "pipe() failed";
        return result;
    }
    fcntl(exec_pipe[1], F_SETFD, FD_CLOEXEC);

    auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], exec_pipe[0], exec_pipe[1]})
            close(fd);
        result.spawn_failed = true;
        result.spawn_error = "fork() failed";
        return result;
    }
    if (pid == 0) {
        setpgid(0, 0);
        if (!cwd.empty()) {
            if (chdir(cwd.c_str()) != 0) _exit(127);
        }
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], exec_pipe[0]}) close(fd);
        std::vector<char*> cargv;
        cargv.reserve(argv.size() + 1);
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        execvp(cargv[0], cargv.data());
        int err = errno;
        ssize_t ignored = write(exec_pipe[1], &err, sizeof err);
        (void)ignored;
        _exit(127);
    }

    setpgid(pid, pid);  // either parent or child wins the race; both set the same pgid
    close(out_pipe[1]);
    close(err_pipe[1]);
    close(exec_pipe[1]);

    auto deadline = start + timeout;
    bool reaped = false;
    int wait_status = 0;
    bool out_open = true, err_open = true;
    char buf[4096];

    auto drain = [&](int fd, std::string& tail, bool& open_flag) {
        for (;;) {
            ssize_t n = read(fd, buf, sizeof buf);
            if (n > 0) {
                append_bounded_tail(tail, std::string_view(buf, size_t(n)), tail_limit);
                if (size_t(n) < sizeof buf) return;
            } else {
                if (n == 0) {
                    close(fd);
                    open_flag = false;
                }
                return;
            }
        }
    };

    while (out_open || err_open || !reaped) {
        if (!reaped) {
            pid_t r = waitpid(pid, &wait_status, WNOHANG);
            if (r == pid) reaped = true;
        }
        auto now = std::chrono::steady_clock::now();
        if (!result.timed_out && now >= deadline && !reaped) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            result.timed_out = true;
        }
        struct pollfd fds[2];
        nfds_t nfds = 0;
        if (out_open) fds[nfds++] = {out_pipe[0], POLLIN, 0};
        if (err_open) fds[nfds++] = {err_pipe[0], POLLIN, 0};
        if (nfds > 0) {
            int wait_ms = 20;
            poll(fds, nfds, wait_ms);
            for (nfds_t i = 0; i < nfds; ++i) {
                if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) {
                    if (fds[i].fd == out_pipe[0])
                        drain(out_pipe[0], result.stdout_tail, out_open);
                    else
                        drain(err_pipe[0], result.stderr_tail, err_open);
                }
            }
        } else if (!reaped) {
            struct timespec ts {0, 10 * 1000 * 1000};
            nanosleep(&ts, nullptr);
        }
        // A grandchild can inherit the pipes and outlive the child; once the
        // direct child is gone and the deadline passed, stop waiting on them.
        if (reaped && (out_open || err_open) &&
            std::chrono::steady_clock::now() >= deadline) {
            if (out_open) close(out_pipe[0]), out_open = false;
            if (err_open) close(err_pipe[0]), err_open = false;
        }
    }

    int child_errno = 0;
    ssize_t n = read(exec_pipe[0], &child_errno, sizeof child_errno);
    close(exec_pipe[0]);
    if (n == sizeof child_errno) {
        result.spawn_failed = true;
        result.spawn_error = std::string("exec failed: ") + strerror(child_errno) + " (" + argv[0] + ")";
    }

    if (WIFEXITED(wait_status))
        result.exit_code = WEXITSTATUS(wait_status);
    else if (WIFSIGNALED(wait_status))
        result.exit_code = 128 + WTERMSIG(wait_status);
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

inline std::vector<std::string> expand_argv(const std::vector<std::string>& tmpl,
                                            const std::map<std::string, std::string>& vars) {
    std::vector<std::string> out;
    out.reserve(tmpl.size());
    for (const auto& piece : tmpl) {
        std::string expanded = piece;
        for (const auto& [key, value] : vars) expanded = replace_all(expanded, "{" + key + "}", value);
        out.push_back(expanded);
    }
    return out;
}

inline fs::path make_temp_dir(const fs::path& root) {
    fs::path base = root.empty() ? fs::temp_directory_path() : root;
    fs::create_directories(base);
    std::string tmpl = (base / "cwall-exec-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (mkdtemp(buf.data()) == nullptr) throw IoError("mkdtemp failed under " + base.string());
    return fs::path(buf.data());
}

inline std::string ensure_trailing_newline(std::string s) {
    if (s.empty() || s.back() != '\n') s.push_back('\n');
    return s;
}

struct Materialized {
    fs::path dir;
    fs::path entry;
    fs::path target;
    // 1-based last line of the candidate region inside the entry file, or 0
    // when the candidate lives in its own file.
    int candidate_line_limit = 0;
};

inline Materialized materialize(const std::string& candidate, const std::string& tests,
                                SubjectLanguage lang, const ExecConfig& cfg) {
    Materialized m;
    m.dir = make_temp_dir(cfg.work_root);
    std::string ext = source_extension(lang);
    if (cfg.layout == FileLayout::single_file) {
        std::string candidate_part = ensure_trailing_newline(candidate);
        std::string merged = candidate_part + ensure_trailing_newline(tests);
        m.entry = m.dir / ("program" + ext);
        m.target = m.entry;
        m.candidate_line_limit = int(std::count(candidate_part.begin(), candidate_part.end(), '\n'));
        write_file(m.entry, merged);
    } else {
        m.target = m.dir / ("solution" + ext);
        m.entry = m.dir / ("tests" + ext);
        write_file(m.target, ensure_trailing_newline(candidate));
        write_file(m.entry, ensure_trailing_newline(tests));
    }
    return m;
}

struct TempDirGuard {
    fs::path dir;
    bool keep = false;
    ~TempDirGuard() {
        if (!keep && !dir.empty()) {
            std::error_code ec;
            fs::remove_all(dir, ec);
        }
    }
};

}  // namespace detail

inline ExecutionOutcome run_tests(const std::string& candidate_code, const std::string& test_suite,
                                  SubjectLanguage lang, std::chrono::milliseconds timeout,
                                  const ExecConfig& cfg = ExecConfig{}) {
    ExecutionOutcome outcome;
    auto it = cfg.toolchains.find(lang);
    if (it == cfg.toolchains.end() || it->second.run.empty()) {
        outcome.status = ExecStatus::error;
        outcome.env_failure = true;
        outcome.diagnostic = "no interpreter configured for language '" + to_string(lang) + "'";
        return outcome;
    }
    const ExecToolchain& tc = it->second;

    detail::Materialized m = detail::materialize(candidate_code, test_suite, lang, cfg);
    detail::TempDirGuard guard{m.dir, cfg.keep_temp};
    std::map<std::string, std::string> vars{{"entry", m.entry.string()}, {"target", m.target.string()}};

    if (!tc.check.empty()) {
        auto check = detail::run_process(detail::expand_argv(tc.check, vars), m.dir, timeout,
                                         cfg.tail_limit);
        outcome.duration_seconds += check.seconds;
        if (check.spawn_failed) {
            outcome.status = ExecStatus::error;
            outcome.env_failure = true;
            outcome.diagnostic = check.spawn_error;
            return outcome;
        }
        if (check.timed_out || check.exit_code != 0) {
            outcome.status = ExecStatus::error;
            outcome.exit_code = check.exit_code;
            outcome.stderr_tail = check.stderr_tail;
            outcome.diagnostic = check.timed_out ? "compile check timed out" : "compile check failed";
            return outcome;
        }
    }

    auto raw = detail::run_process(detail::expand_argv(tc.run, vars), m.dir, timeout, cfg.tail_limit);
    outcome.duration_seconds += raw.seconds;
    outcome.stdout_tail = raw.stdout_tail;
    outcome.stderr_tail = raw.stderr_tail;
    if (raw.spawn_failed) {
        outcome.status = ExecStatus::error;
        outcome.env_failure = true;
        outcome.diagnostic = raw.spawn_error;
    } else if (raw.timed_out) {
        outcome.status = ExecStatus::timeout;
        outcome.exit_code = raw.exit_code;
    } else {
        outcome.exit_code = raw.exit_code;
        outcome.status = raw.exit_code == 0 ? ExecStatus::pass : ExecStatus::fail;
    }
    return outcome;
}

inline ExecutionOutcome run_tests_with_coverage(const std::string& candidate_code,
                                                const std::string& test_suite, SubjectLanguage lang,
                                                std::chrono::milliseconds timeout,
                                                const ExecConfig& cfg = ExecConfig{}) {
    auto it = cfg.toolchains.find(lang);
    if (it == cfg.toolchains.end() || it->second.run.empty()) {
        ExecutionOutcome outcome;
        outcome.status = ExecStatus::error;
        outcome.env_failure = true;
        outcome.diagnostic = "no interpreter configured for language '" + to_string(lang) + "'";
        return outcome;
    }
    const ExecToolchain& tc = it->second;
    if (tc.coverage.empty()) {
        auto outcome = run_tests(candidate_code, test_suite, lang, timeout, cfg);
        outcome.diagnostic = (outcome.diagnostic.empty() ? "" : outcome.diagnostic + "; ") +
                             std::string("coverage unavailable: no tracer configured for language '") +
                             to_string(lang) + "'";
        return outcome;
    }

    ExecutionOutcome outcome;
    detail::Materialized m = detail::materialize(candidate_code, test_suite, lang, cfg);
    detail::TempDirGuard guard{m.dir, cfg.keep_temp};
    fs::path tracer = m.dir / "line_tracer.py";
    fs::path report = m.dir / "coverage_report.json";
    write_file(tracer, python_tracer_source());
    std::map<std::string, std::string> vars{{"entry", m.entry.string()},
                                            {"target", m.target.string()},
                                            {"report", report.string()},
                                            {"tracer", tracer.string()}};

    if (!tc.check.empty()) {
        auto check = detail::run_process(detail::expand_argv(tc.check, vars), m.dir, timeout,
                                         cfg.tail_limit);
        outcome.duration_seconds += check.seconds;
        if (check.spawn_failed) {
            outcome.status = ExecStatus::error;
            outcome.env_failure = true;
            outcome.diagnostic = check.spawn_error;
            return outcome;
        }
        if (check.timed_out || check.exit_code != 0) {
            outcome.status = ExecStatus::error;
            outcome.exit_code = check.exit_code;
            outcome.stderr_tail = check.stderr_tail;
            outcome.diagnostic = check.timed_out ? "compile check timed out" : "compile check failed";
            return outcome;
        }
    }

    auto raw = detail::run_process(detail::expand_argv(tc.coverage, vars), m.dir, timeout,
                                   cfg.tail_limit);
    outcome.duration_seconds += raw.seconds;
    outcome.stdout_tail = raw.stdout_tail;
    outcome.stderr_tail = raw.stderr_tail;
    if (raw.spawn_failed) {
        outcome.status = ExecStatus::error;
        outcome.env_failure = true;
        outcome.diagnostic = raw.spawn_error;
        return outcome;
    }
    if (raw.timed_out) {
        outcome.status = ExecStatus::timeout;
        outcome.exit_code = raw.exit_code;
        outcome.diagnostic = "coverage unavailable: run timed out";
        return outcome;
    }
    outcome.exit_code = raw.exit_code;
    outcome.status = raw.exit_code == 0 ? ExecStatus::pass : ExecStatus::fail;

    if (!fs::exists(report)) {
        guard.keep = cfg.keep_temp;
        auto plain = run_tests(candidate_code, test_suite, lang, timeout, cfg);
        plain.diagnostic = (plain.diagnostic.empty() ? "" : plain.diagnostic + "; ") +
                           std::string("coverage unavailable: tracer produced no report");
        return plain;
    }
    try {
        auto doc = nlohmann::json::parse(read_file(report));
        std::set<int> executable, covered;
        for (const auto& v : doc.at("executable_lines")) executable.insert(v.get<int>());
        for (const auto& v : doc.at("covered_lines")) covered.insert(v.get<int>());
        if (m.candidate_line_limit > 0) {
            auto limit_to_candidate = [&](std::set<int>& s) {
                std::set<int> kept;
                for (int line : s)
                    if (line <= m.candidate_line_limit) kept.insert(line);
                s.swap(kept);
            };
            limit_to_candidate(executable);
            limit_to_candidate(covered);
        }
        std::set<int> intersected;
        for (int line : covered)
            if (executable.count(line)) intersected.insert(line);
        outcome.executable_lines = std::move(executable);
        outcome.covered_lines = std::move(intersected);
    } catch (const std::exception& e) {
        outcome.diagnostic = std::string("coverage unavailable: bad tracer report: ") + e.what();
    }
    return outcome;
}

}  // namespace cwall
