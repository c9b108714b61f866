#pragma once

// OpenAI-compatible HTTP adapter (vLLM, Ollama, hosted gateways all expose
// this shape). Chat prompts go to {base}/chat/completions, completion
// prompts to {base}/completions.

#include <memory>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "cwall/modelclient.hpp"
#include "cwall/util.hpp"

namespace cwall {

namespace detail {

struct ParsedEndpoint {
    std::string host_base;  // scheme://host[:port]
    std::string path_base;  // e.g. /v1 (no trailing slash)
};

inline ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("backend endpoint must be a URL or \"scripted\": " + endpoint);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (endpoint.rfind("https://", 0) == 0)
        throw ConfigError("https endpoint requires a TLS-enabled build: " + endpoint);
#endif
    auto path_start = endpoint.find('/', scheme_end + 3);
    ParsedEndpoint parsed;
    if (path_start == std::string::npos) {
        parsed.host_base = endpoint;
    } else {
        parsed.host_base = endpoint.substr(0, path_start);
        parsed.path_base = endpoint.substr(path_start);
        while (!parsed.path_base.empty() && parsed.path_base.back() == '/')
            parsed.path_base.pop_back();
    }
    return parsed;
}

}  // namespace detail

class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendSpec spec)
        : Backend(std::move(spec)), parsed_(detail::parse_endpoint(this->spec().endpoint)) {}

protected:
    ModelResponse do_generate(const RenderedPrompt& prompt, const SamplingParams& params) override {
        nlohmann::json body;
        body["model"] = spec().name;
        body["max_tokens"] = params.max_new_tokens;
        body["temperature"] = params.temperature;
        body["top_p"] = params.top_p;
        if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;
        if (params.thinking == ThinkingMode::off) body["reasoning_effort"] = "none";

        std::string path;
        if (prompt.kind == PromptKind::chat) {
            path = parsed_.path_base + "/chat/completions";
            auto messages = nlohmann::json::array();
            for (const auto& m : prompt.messages)
                messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
            body["messages"] = std::move(messages);
        } else {
            path = parsed_.path_base + "/completions";
            body["prompt"] = prompt.prompt_text;
        }

        httplib::Client http(parsed_.host_base);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec().request_timeout);
        http.set_connection_timeout(secs.count(), 0);
        http.set_read_timeout(secs.count(), 0);
        http.set_write_timeout(secs.count(), 0);
        httplib::Headers headers;
        if (!spec().credential_env.empty()) {
            const char* key = std::getenv(spec().credential_env.c_str());
            if (key != nullptr && *key != '\0')
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        auto result = http.Post(path, headers, body.dump(), "application/json");
        if (!result)
            throw TransportError("backend '" + spec().name + "': " + httplib::to_string(result.error()));
        if (result->status != 200)
            throw BackendError("backend '" + spec().name + "': HTTP " + std::to_string(result->status) +
                                   ": " + result->body.substr(0, 512),
                               result->status);
        return parse_payload(result->body, prompt.kind);
    }

private:
    ModelResponse parse_payload(const std::string& body, PromptKind kind) const {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError("backend '" + spec().name + "': malformed JSON payload: " + e.what());
        }
        if (!doc.contains("choices") || !doc.at("choices").is_array() || doc.at("choices").empty())
            throw ProtocolError("backend '" + spec().name + "': payload has no choices");
        const auto& choice = doc.at("choices").at(0);

        ModelResponse resp;
        if (kind == PromptKind::chat) {
            if (choice.contains("message") && choice.at("message").contains("content") &&
                choice.at("message").at("content").is_string())
                resp.text = choice.at("message").at("content").get<std::string>();
        } else if (choice.contains("text") && choice.at("text").is_string()) {
            resp.text = choice.at("text").get<std::string>();
        }
        if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
            std::string reason = choice.at("finish_reason").get<std::string>();
            resp.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
        }
        if (doc.contains("usage")) {
            const auto& usage = doc.at("usage");
            if (usage.contains("prompt_tokens") && usage.at("prompt_tokens").is_number())
                resp.prompt_tokens = usage.at("prompt_tokens").get<int>();
            if (usage.contains("completion_tokens") && usage.at("completion_tokens").is_number())
                resp.completion_tokens = usage.at("completion_tokens").get<int>();
        }
        return resp;
    }

    detail::ParsedEndpoint parsed_;
};

inline std::shared_ptr<Backend> make_http_backend(const BackendSpec& spec) {
    return std::make_shared<HttpBackend>(spec);
}

}  // namespace cwall
