#pragma once

// OpenAI-compatible chat-completions client and the judge / generation /
// policy adapters built on it. Define KGCURR_WITH_OPENSSL (and link OpenSSL)
// to reach https endpoints.

#if defined(KGCURR_WITH_OPENSSL) && !defined(CPPHTTPLIB_OPENSSL_SUPPORT)
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "kgcurr/consensus.hpp"
#include "kgcurr/curriculum.hpp"
#include "kgcurr/error.hpp"
#include "kgcurr/grpo.hpp"
#include "kgcurr/qa_item.hpp"

namespace kgcurr {

struct ChatEndpoint {
    std::string base_url;                    // e.g. http://localhost:8000/v1
    std::string model;
    std::string api_key_env = "KGCURR_API_KEY"; // read at call time; empty name disables auth
    int timeout_seconds = 60;
    int max_retries = 3;
    int backoff_ms = 500; // doubled after every failed attempt

    friend bool operator==(const ChatEndpoint&, const ChatEndpoint&) = default;
};

struct ChatRequest {
    std::string prompt;
    double temperature = 0.0;
    double top_p = 1.0;
    std::size_t max_tokens = 1024;
    bool logprobs = false;
};

struct ChatReply {
    std::string text;
    std::vector<double> token_logprobs;
    int attempts = 0;
};

namespace detail {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string prefix; // path part without trailing slash
};

inline SplitUrl split_url(std::string_view url) {
    const auto scheme = url.find("://");
    if (scheme == std::string_view::npos) throw Error(ErrorCode::ConfigError, "endpoint url needs a scheme: " + std::string(url));
    const auto slash = url.find('/', scheme + 3);
    SplitUrl out;
    out.origin = std::string(url.substr(0, slash));
    if (slash != std::string_view::npos) out.prefix = std::string(url.substr(slash));
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

} // namespace detail

class ChatClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit ChatClient(ChatEndpoint endpoint, Sleeper sleeper = {})
        : endpoint_(std::move(endpoint)), url_(detail::split_url(endpoint_.base_url)),
          sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {
        if (endpoint_.model.empty()) throw Error(ErrorCode::ConfigError, "endpoint model is empty");
        if (endpoint_.max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
    }

    const ChatEndpoint& endpoint() const noexcept { return endpoint_; }

    /// Retries transport failures and 408/429/5xx with exponential backoff;
    /// throws RemoteUnavailable when attempts run out or the reply is unusable.
    ChatReply complete(const ChatRequest& req) const {
        nlohmann::json body = {{"model", endpoint_.model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
                               {"temperature", req.temperature},
                               {"top_p", req.top_p},
                               {"max_tokens", req.max_tokens}};
        if (req.logprobs) body["logprobs"] = true;
        const std::string payload = body.dump();
        const std::string path = url_.prefix + "/chat/completions";

        httplib::Headers headers;
        if (!endpoint_.api_key_env.empty()) {
            if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        std::string last_error;
        auto delay = std::chrono::milliseconds(endpoint_.backoff_ms);
        for (int attempt = 1; attempt <= endpoint_.max_retries + 1; ++attempt) {
            if (attempt > 1) {
                sleeper_(delay);
                delay *= 2;
            }
            httplib::Client cli(url_.origin);
            cli.set_connection_timeout(endpoint_.timeout_seconds, 0);
            cli.set_read_timeout(endpoint_.timeout_seconds, 0);
            auto res = cli.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                if (detail::retryable_status(res->status)) continue;
                break;
            }
            ChatReply reply = parse_reply(res->body);
            reply.attempts = attempt;
            return reply;
        }
        throw Error(ErrorCode::RemoteUnavailable, endpoint_.base_url + ": " + last_error);
    }

    static ChatReply parse_reply(const std::string& body) {
        auto j = nlohmann::json::parse(body, nullptr, false);
        try {
            if (j.is_discarded()) throw std::runtime_error("reply is not JSON");
            const auto& choice = j.at("choices").at(0);
            ChatReply out;
            out.text = choice.at("message").at("content").get<std::string>();
            if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
                choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
                for (const auto& tok : choice["logprobs"]["content"]) out.token_logprobs.push_back(tok.at("logprob").get<double>());
            }
            return out;
        } catch (const std::exception& e) {
            throw Error(ErrorCode::RemoteUnavailable, std::string("malformed chat reply: ") + e.what());
        }
    }

private:
    ChatEndpoint endpoint_;
    detail::SplitUrl url_;
    Sleeper sleeper_;
};

class RemoteJudge final : public JudgeClient {
public:
    RemoteJudge(std::string name, std::shared_ptr<const ChatClient> client)
        : name_(std::move(name)), client_(std::move(client)) {}

    std::string name() const override { return name_; }

    std::string judge(const Triple&, std::string_view prompt) const override {
        try {
            return client_->complete({std::string(prompt), 0.0, 1.0, 512, false}).text;
        } catch (const Error& e) {
            throw Error(ErrorCode::JudgeUnavailable, name_ + ": " + e.what());
        }
    }

private:
    std::string name_;
    std::shared_ptr<const ChatClient> client_;
};

class RemoteGenerationClient final : public GenerationClient {
public:
    explicit RemoteGenerationClient(std::shared_ptr<const ChatClient> client) : client_(std::move(client)) {}

    std::string generate(std::string_view prompt) const override {
        return client_->complete({std::string(prompt), 0.7, 1.0, 1024, false}).text;
    }

private:
    std::shared_ptr<const ChatClient> client_;
};

inline std::string build_policy_prompt(const QaItem& item) {
    std::string p = item.question + "\n";
    for (std::size_t i = 0; i < 4; ++i) p += std::string(1, kOptionLetters[i]) + ". " + item.options[i] + "\n";
    p += "\nReason step by step inside <think></think>, then give only the option letter inside "
         "<answer></answer>.";
    return p;
}

/// Samples from an external model. Log-probabilities are known only for
/// completions this policy produced; updates are unsupported.
class RemotePolicy final : public Policy {
public:
    explicit RemotePolicy(std::shared_ptr<const ChatClient> client) : client_(std::move(client)) {}

    std::string name() const override { return "remote"; }

    PolicySample sample(const QaItem& prompt, double temperature, double top_p, std::size_t max_tokens,
                        Rng&) override {
        ChatReply reply;
        try {
            reply = client_->complete({build_policy_prompt(prompt), temperature, top_p, max_tokens, true});
        } catch (const Error& e) {
            throw Error(ErrorCode::PolicyUnavailable, e.what());
        }
        PolicySample s{truncate_tokens(reply.text, max_tokens), std::move(reply.token_logprobs)};
        std::lock_guard lock(*mu_);
        (*seen_)[prompt.id + '\x1f' + s.text] = s.total_logprob();
        return s;
    }

    double logprob(const QaItem& prompt, std::string_view completion) const override {
        std::lock_guard lock(*mu_);
        auto it = seen_->find(prompt.id + '\x1f' + std::string(completion));
        if (it == seen_->end())
            throw Error(ErrorCode::PolicyUnavailable, "no log-probability recorded for this completion");
        return it->second;
    }

    std::unique_ptr<Policy> clone() const override { return std::make_unique<RemotePolicy>(*this); }

private:
    std::shared_ptr<const ChatClient> client_;
    std::shared_ptr<std::mutex> mu_ = std::make_shared<std::mutex>();
    std::shared_ptr<std::map<std::string, double>> seen_ = std::make_shared<std::map<std::string, double>>();
};

} // namespace kgcurr
