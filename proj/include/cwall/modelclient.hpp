#pragma once

// Uniform access to text-generation backends. Two implementations: an
// OpenAI-compatible HTTP adapter (chat + completion routes) and a scripted
// backend that replays fixture responses deterministically for tests.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cwall/prompts.hpp"
#include "cwall/util.hpp"

namespace cwall {

enum class ThinkingMode { default_mode, off };

struct SamplingParams {
    int max_new_tokens = 2048;
    double temperature = 0.2;
    double top_p = 0.95;
    std::vector<std::string> stop_sequences;
    ThinkingMode thinking = ThinkingMode::default_mode;

    void validate() const {
        if (max_new_tokens < 1) throw ContractError("sampling: max_new_tokens must be >= 1");
        if (temperature < 0) throw ContractError("sampling: temperature must be >= 0");
        if (!(top_p > 0 && top_p <= 1)) throw ContractError("sampling: top_p must be in (0, 1]");
    }
};

inline std::string to_string(ThinkingMode m) {
    return m == ThinkingMode::off ? "off" : "default";
}

inline ThinkingMode thinking_mode_from_string(const std::string& s) {
    if (s == "default") return ThinkingMode::default_mode;
    if (s == "off") return ThinkingMode::off;
    throw FormatError("unknown thinking mode: '" + s + "'");
}

inline nlohmann::ordered_json sampling_params_to_json(const SamplingParams& p) {
    nlohmann::ordered_json j;
    j["max_new_tokens"] = p.max_new_tokens;
    j["temperature"] = p.temperature;
    j["top_p"] = p.top_p;
    j["stop_sequences"] = p.stop_sequences;
    j["thinking"] = to_string(p.thinking);
    return j;
}

inline SamplingParams sampling_params_from_json(const nlohmann::json& j) {
    SamplingParams p;
    if (j.contains("max_new_tokens")) p.max_new_tokens = j.at("max_new_tokens").get<int>();
    if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
    if (j.contains("top_p")) p.top_p = j.at("top_p").get<double>();
    if (j.contains("stop_sequences"))
        p.stop_sequences = j.at("stop_sequences").get<std::vector<std::string>>();
    if (j.contains("thinking")) p.thinking = thinking_mode_from_string(j.at("thinking").get<std::string>());
    p.validate();
    return p;
}

enum class FinishReason { stop, length, error };

inline std::string to_string(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

struct ModelResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    std::string diagnostic;  // populated when finish_reason == error
    bool retried = false;    // true when produced by the truncation retry
};

enum class BackendKind { chat, completion, both };

inline std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::chat: return "chat";
        case BackendKind::completion: return "completion";
        case BackendKind::both: return "both";
    }
    return "chat";
}

inline BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "chat") return BackendKind::chat;
    if (s == "completion") return BackendKind::completion;
    if (s == "both") return BackendKind::both;
    throw FormatError("unknown backend kind: '" + s + "'");
}

struct BackendSpec {
    std::string name;  // model identifier, also sent as the wire "model" field
    BackendKind kind = BackendKind::chat;
    std::string endpoint;        // base URL, or the literal "scripted"
    std::string credential_env;  // env var holding the API key; value never stored
    std::chrono::milliseconds request_timeout{120000};
    fs::path script_fixture;  // required when endpoint == "scripted"
    int max_concurrent = 4;
    int transport_retries = 3;
    int backoff_base_ms = 250;

    bool is_scripted() const { return endpoint == "scripted"; }
};

inline BackendSpec backend_spec_from_json(const nlohmann::json& j) {
    BackendSpec spec;
    if (!j.contains("name") || !j.at("name").is_string())
        throw FormatError("backend spec: missing \"name\"");
    spec.name = j.at("name").get<std::string>();
    if (j.contains("kind")) spec.kind = backend_kind_from_string(j.at("kind").get<std::string>());
    if (!j.contains("endpoint") || !j.at("endpoint").is_string())
        throw FormatError("backend spec '" + spec.name + "': missing \"endpoint\"");
    spec.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("credential_env")) spec.credential_env = j.at("credential_env").get<std::string>();
    if (j.contains("request_timeout_ms"))
        spec.request_timeout = std::chrono::milliseconds(j.at("request_timeout_ms").get<int>());
    if (j.contains("fixture")) spec.script_fixture = j.at("fixture").get<std::string>();
    if (j.contains("max_concurrent")) spec.max_concurrent = j.at("max_concurrent").get<int>();
    if (j.contains("transport_retries")) spec.transport_retries = j.at("transport_retries").get<int>();
    if (j.contains("backoff_base_ms")) spec.backoff_base_ms = j.at("backoff_base_ms").get<int>();
    if (spec.is_scripted() && spec.script_fixture.empty())
        throw ConfigError("backend spec '" + spec.name + "': scripted backends require \"fixture\"");
    return spec;
}

// Secrets stay out of every artifact: only the env var name is exported.
inline nlohmann::ordered_json backend_spec_to_json(const BackendSpec& spec) {
    nlohmann::ordered_json j;
    j["name"] = spec.name;
    j["kind"] = to_string(spec.kind);
    j["endpoint"] = spec.endpoint;
    if (!spec.credential_env.empty()) j["credential_env"] = spec.credential_env;
    j["request_timeout_ms"] = int(spec.request_timeout.count());
    if (!spec.script_fixture.empty()) j["fixture"] = spec.script_fixture.string();
    j["max_concurrent"] = spec.max_concurrent;
    return j;
}

class Backend {
public:
    explicit Backend(BackendSpec spec) : spec_(std::move(spec)) {}
    virtual ~Backend() = default;

    const BackendSpec& spec() const { return spec_; }

    ModelResponse generate_raw(const RenderedPrompt& prompt, const SamplingParams& params) {
        {
            std::lock_guard lock(log_mutex_);
            params_log_.push_back(params);
        }
        calls_.fetch_add(1);
        return do_generate(prompt, params);
    }

    int calls() const { return calls_.load(); }

    std::vector<SamplingParams> params_log() const {
        std::lock_guard lock(log_mutex_);
        return params_log_;
    }

protected:
    virtual ModelResponse do_generate(const RenderedPrompt&, const SamplingParams&) = 0;

private:
    BackendSpec spec_;
    std::atomic<int> calls_{0};
    mutable std::mutex log_mutex_;
    std::vector<SamplingParams> params_log_;
};

// ---------------------------------------------------------------------------
// Scripted backend.
//
// Fixture format (JSON): {"entries": [entry, ...]}. An entry matches a prompt
// by exactly one of:
//   "key":      hex prompt key (prompt_key() of the rendered prompt)
//   "contains": substring of the prompt's canonical text
//   "any":      true (catch-all)
// Each entry carries "responses", an ordered queue consumed per call; once
// exhausted the last response repeats. Response items:
//   {"text": "...", "finish_reason": "stop"|"length"|"error"}
//   {"truncate": true}      shorthand for empty text + length
//   {"error": "message"}    the call fails with a backend error

class ScriptedBackend : public Backend {
public:
    ScriptedBackend(BackendSpec spec, const nlohmann::json& fixture) : Backend(std::move(spec)) {
        load_fixture(fixture);
    }

    static std::shared_ptr<ScriptedBackend> from_spec(const BackendSpec& spec) {
        if (spec.script_fixture.empty())
            throw ConfigError("scripted backend '" + spec.name + "' has no fixture path");
        nlohmann::json fixture;
        try {
            fixture = nlohmann::json::parse(read_file(spec.script_fixture));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("scripted fixture " + spec.script_fixture.string() + ": " + e.what());
        }
        return std::make_shared<ScriptedBackend>(spec, fixture);
    }

protected:
    ModelResponse do_generate(const RenderedPrompt& prompt, const SamplingParams&) override {
        std::string canonical = prompt.canonical_text();
        std::string key = prompt_key(prompt);
        std::lock_guard lock(mutex_);
        for (auto& entry : entries_) {
            bool matched = false;
            switch (entry.match) {
                case Entry::Match::key: matched = entry.pattern == key; break;
                case Entry::Match::contains: matched = contains(canonical, entry.pattern); break;
                case Entry::Match::any: matched = true; break;
            }
            if (!matched) continue;
            const Scripted& item = entry.responses[std::min(entry.next, entry.responses.size() - 1)];
            ++entry.next;
            if (!item.error.empty()) throw BackendError("scripted error: " + item.error);
            ModelResponse resp;
            resp.text = item.text;
            resp.finish_reason = item.finish;
            resp.completion_tokens = int(item.text.size() / 4);
            return resp;
        }
        throw ProtocolError("scripted backend '" + spec().name + "': no fixture entry for prompt key " +
                            key);
    }

private:
    struct Scripted {
        std::string text;
        FinishReason finish = FinishReason::stop;
        std::string error;
    };
    struct Entry {
        enum class Match { key, contains, any };
        Match match = Match::any;
        std::string pattern;
        std::vector<Scripted> responses;
        size_t next = 0;
    };

    void load_fixture(const nlohmann::json& fixture) {
        if (!fixture.contains("entries") || !fixture.at("entries").is_array())
            throw FormatError("scripted fixture: expected top-level \"entries\" array");
        for (const auto& e : fixture.at("entries")) {
            Entry entry;
            if (e.contains("key")) {
                entry.match = Entry::Match::key;
                entry.pattern = e.at("key").get<std::string>();
            } else if (e.contains("contains")) {
                entry.match = Entry::Match::contains;
                entry.pattern = e.at("contains").get<std::string>();
            } else if (e.contains("any") && e.at("any").get<bool>()) {
                entry.match = Entry::Match::any;
            } else {
                throw FormatError("scripted fixture entry needs \"key\", \"contains\" or \"any\"");
            }
            if (!e.contains("responses") || !e.at("responses").is_array() ||
                e.at("responses").empty())
                throw FormatError("scripted fixture entry needs a non-empty \"responses\" array");
            for (const auto& r : e.at("responses")) {
                Scripted item;
                if (r.contains("truncate") && r.at("truncate").get<bool>()) {
                    item.finish = FinishReason::length;
                } else if (r.contains("error")) {
                    item.error = r.at("error").get<std::string>();
                } else {
                    item.text = r.at("text").get<std::string>();
                    if (r.contains("finish_reason")) {
                        std::string f = r.at("finish_reason").get<std::string>();
                        if (f == "stop")
                            item.finish = FinishReason::stop;
                        else if (f == "length")
                            item.finish = FinishReason::length;
                        else
                            throw FormatError("scripted fixture: bad finish_reason '" + f + "'");
                    }
                }
                entry.responses.push_back(std::move(item));
            }
            entries_.push_back(std::move(entry));
        }
    }

    std::mutex mutex_;
    std::vector<Entry> entries_;
};

inline std::shared_ptr<Backend> make_http_backend(const BackendSpec& spec);  // modelclient_http.hpp

inline std::shared_ptr<Backend> make_backend(const BackendSpec& spec) {
    if (spec.is_scripted()) return ScriptedBackend::from_spec(spec);
    return make_http_backend(spec);
}

// ---------------------------------------------------------------------------
// Client: kind checking, per-backend concurrency cap, transport retries with
// jittered exponential backoff, and client-side stop-sequence trimming.

class Client {
public:
    explicit Client(std::shared_ptr<Backend> backend)
        : backend_(std::move(backend)),
          slots_(std::make_shared<std::counting_semaphore<>>(
              std::max(1, backend_->spec().max_concurrent))) {}

    static Client from_spec(const BackendSpec& spec) { return Client(make_backend(spec)); }

    const BackendSpec& spec() const { return backend_->spec(); }
    Backend& backend() { return *backend_; }
    int calls() const { return backend_->calls(); }

    ModelResponse generate(const RenderedPrompt& prompt, const SamplingParams& params) const {
        params.validate();
        check_kind(prompt);
        slots_->acquire();
        struct Release {
            std::counting_semaphore<>* s;
            ~Release() { s->release(); }
        } release{slots_.get()};

        // The prompt owns its stop sequences; fold them into the request.
        SamplingParams effective = params;
        for (const auto& stop : prompt.stop_sequences) {
            if (std::find(effective.stop_sequences.begin(), effective.stop_sequences.end(), stop) ==
                effective.stop_sequences.end())
                effective.stop_sequences.push_back(stop);
        }

        const auto& spec = backend_->spec();
        ModelResponse resp;
        for (int attempt = 0;; ++attempt) {
            try {
                resp = backend_->generate_raw(prompt, effective);
                break;
            } catch (const TransportError& e) {
                if (!e.retryable || attempt >= spec.transport_retries) throw;
            } catch (const BackendError& e) {
                if (!retryable_status(e.status) || attempt >= spec.transport_retries) throw;
            }
            backoff(attempt, spec.backoff_base_ms);
        }
        apply_stop_sequences(resp, effective.stop_sequences);
        return resp;
    }

private:
    static bool retryable_status(int status) {
        return status == 429 || status == 500 || status == 502 || status == 503 || status == 504;
    }

    static void backoff(int attempt, int base_ms) {
        thread_local std::mt19937 rng{std::random_device{}()};
        std::uniform_int_distribution<int> jitter(0, std::max(1, base_ms));
        int delay = base_ms * (1 << std::min(attempt, 6)) + jitter(rng);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }

    void check_kind(const RenderedPrompt& prompt) const {
        BackendKind kind = backend_->spec().kind;
        if (kind == BackendKind::both) return;
        bool ok = (prompt.kind == PromptKind::chat && kind == BackendKind::chat) ||
                  (prompt.kind == PromptKind::completion && kind == BackendKind::completion);
        if (!ok)
            throw ContractError("backend '" + backend_->spec().name + "' (" + to_string(kind) +
                                ") cannot serve a " +
                                (prompt.kind == PromptKind::chat ? std::string("chat")
                                                                 : std::string("completion")) +
                                " prompt");
    }

    // Servers that honor stop sequences never include them; trim here so
    // scripted fixtures and lax servers behave identically.
    static void apply_stop_sequences(ModelResponse& resp, const std::vector<std::string>& stops) {
        if (resp.finish_reason == FinishReason::error || resp.text.empty()) return;
        size_t cut = std::string::npos;
        for (const auto& stop : stops) {
            if (stop.empty()) continue;
            size_t pos = resp.text.find(stop);
            if (pos != std::string::npos) cut = std::min(cut, pos);
        }
        if (cut != std::string::npos) {
            resp.text.erase(cut);
            resp.finish_reason = FinishReason::stop;
        }
    }

    std::shared_ptr<Backend> backend_;
    std::shared_ptr<std::counting_semaphore<>> slots_;
};

// Single semantic retry for backends that return nothing when the token
// budget is hit: one more attempt with a much larger budget.
inline ModelResponse generate_with_truncation_retry(const Client& client,
                                                    const RenderedPrompt& prompt,
                                                    const SamplingParams& params,
                                                    int retry_max_tokens) {
    if (retry_max_tokens <= params.max_new_tokens)
        throw ContractError("truncation retry budget must exceed max_new_tokens");
    ModelResponse first = client.generate(prompt, params);
    if (!(first.finish_reason == FinishReason::length && first.text.empty())) return first;
    SamplingParams bigger = params;
    bigger.max_new_tokens = retry_max_tokens;
    ModelResponse second = client.generate(prompt, bigger);
    second.retried = true;
    return second;
}

// n independent samples; a failure in slot i becomes an error-kind response
// in slot i, never a shorter list.
inline std::vector<ModelResponse> sample_n(const Client& client, const RenderedPrompt& prompt,
                                           const SamplingParams& params, int n) {
    if (n < 1) throw ContractError("sample_n: n must be >= 1");
    std::vector<ModelResponse> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        try {
            out.push_back(client.generate(prompt, params));
        } catch (const Error& e) {
            ModelResponse failed;
            failed.finish_reason = FinishReason::error;
            failed.diagnostic = e.what();
            out.push_back(std::move(failed));
        }
    }
    return out;
}

}  // namespace cwall

#include "cwall/modelclient_http.hpp"
