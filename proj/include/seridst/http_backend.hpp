#pragma once

// Live chat-completion backend over HTTP(S). Kept apart from llmclient.hpp so
// that only translation units that actually talk to the network pull in httplib.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "seridst/llmclient.hpp"

namespace seridst::llm {

inline constexpr const char* kEndpointEnv = "SERIDST_API_URL";
inline constexpr const char* kApiKeyEnv = "SERIDST_API_KEY";
inline constexpr const char* kDefaultEndpoint = "https://api.openai.com/v1/chat/completions";

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds initial_delay{1000};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{30000};
    /// Fraction of each delay that is randomized, in [0, 1].
    double jitter = 0.25;
};

struct LiveConfig {
    std::string endpoint = kDefaultEndpoint;
    std::string api_key;
    RetryPolicy retry;
    int max_in_flight = 4;
    std::chrono::milliseconds min_interval{0};
    std::chrono::seconds timeout{120};

    /// Endpoint and key from $SERIDST_API_URL / $SERIDST_API_KEY (falls back to $OPENAI_API_KEY).
    static LiveConfig from_environment() {
        LiveConfig c;
        if (const char* url = std::getenv(kEndpointEnv); url && *url) c.endpoint = url;
        if (const char* key = std::getenv(kApiKeyEnv); key && *key) {
            c.api_key = key;
        } else if (const char* fallback = std::getenv("OPENAI_API_KEY"); fallback && *fallback) {
            c.api_key = fallback;
        }
        return c;
    }
};

/// Splits "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Builds the request body for the chat-completion wire format.
inline nlohmann::json chat_request_body(const CompletionRequest& request) {
    return {{"model", request.model_id},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
}

inline CompletionResponse parse_chat_response(const std::string& body) {
    try {
        const auto j = nlohmann::json::parse(body);
        CompletionResponse r;
        r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage") && j.at("usage").is_object()) {
            r.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0);
            r.usage.output_tokens = j.at("usage").value("completion_tokens", 0);
        }
        r.source = ResponseSource::live;
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendErrorKind::protocol, std::string("unexpected response body: ") + e.what());
    }
}

class LiveBackend final : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit LiveBackend(LiveConfig config, Sleeper sleeper = {})
        : config_(std::move(config)),
          slots_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, kMaxInFlight)),
          sleeper_(sleeper ? std::move(sleeper)
                           : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
          rng_(std::random_device{}()) {
        std::tie(host_, path_) = split_endpoint(config_.endpoint);
        if (config_.max_in_flight > kMaxInFlight)
            throw ConfigError("max_in_flight above " + std::to_string(kMaxInFlight));
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<kMaxInFlight>& s;
            ~Release() { s.release(); }
        } release{slots_};

        const std::string body = chat_request_body(request).dump();
        std::string last_failure;
        for (int attempt = 0; attempt < config_.retry.max_attempts; ++attempt) {
            if (attempt > 0) sleeper_(backoff(attempt - 1));
            pace();
            ++attempts_;

            httplib::Client client(host_);
            client.set_connection_timeout(config_.timeout);
            client.set_read_timeout(config_.timeout);
            httplib::Headers headers;
            if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
            auto result = client.Post(path_, headers, body, "application/json");
            if (!result) {
                last_failure = "connection failed: " + httplib::to_string(result.error());
                continue;
            }
            const int status = result->status;
            if (status == 200) return parse_chat_response(result->body);
            if (status == 401 || status == 403)
                throw BackendError(BackendErrorKind::auth, "HTTP " + std::to_string(status));
            if (status == 429 || status >= 500) {
                last_failure = "HTTP " + std::to_string(status);
                continue;
            }
            throw BackendError(BackendErrorKind::protocol,
                               "HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
        }
        const auto kind = text::starts_with(last_failure, "connection") ? BackendErrorKind::connectivity
                                                                        : BackendErrorKind::transient;
        throw BackendError(kind, "gave up after " + std::to_string(config_.retry.max_attempts) +
                                     " attempts; last: " + last_failure);
    }

    /// Total HTTP attempts made, including retries.
    std::size_t attempts() const noexcept { return attempts_.load(); }

private:
    static constexpr std::ptrdiff_t kMaxInFlight = 64;

    std::chrono::milliseconds backoff(int retry_index) {
        double base = static_cast<double>(config_.retry.initial_delay.count());
        for (int i = 0; i < retry_index; ++i) base *= config_.retry.multiplier;
        base = std::min(base, static_cast<double>(config_.retry.max_delay.count()));
        std::lock_guard lock(mutex_);
        std::uniform_real_distribution<double> spread(1.0 - config_.retry.jitter, 1.0);
        return std::chrono::milliseconds(static_cast<long long>(base * spread(rng_)));
    }

    /// Enforces the minimum interval between request starts.
    void pace() {
        if (config_.min_interval.count() <= 0) return;
        std::chrono::steady_clock::time_point start;
        {
            std::lock_guard lock(mutex_);
            const auto now = std::chrono::steady_clock::now();
            start = std::max(now, next_start_);
            next_start_ = start + config_.min_interval;
        }
        std::this_thread::sleep_until(start);
    }

    LiveConfig config_;
    std::string host_;
    std::string path_;
    std::counting_semaphore<kMaxInFlight> slots_;
    Sleeper sleeper_;
    std::mutex mutex_;
    std::mt19937_64 rng_;
    std::chrono::steady_clock::time_point next_start_{};
    std::atomic<std::size_t> attempts_{0};
};

}  // namespace seridst::llm
