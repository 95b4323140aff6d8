#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>

#include <json.hpp>
#include <openssl/evp.h>

#include "seridst/errors.hpp"
#include "seridst/text.hpp"

namespace seridst::llm {

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < length; ++i)
        out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return out.str();
}

/// Rough token estimate (four characters per token) used for budgets and mock usage.
inline std::size_t approx_tokens(std::string_view text) { return (text.size() + 3) / 4; }

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::string model_id = "gpt-3.5-turbo";

    /// Stable over (prompt, temperature, model_id); max_output_tokens is not part of it.
    std::string digest() const {
        const nlohmann::json key = {{"model", model_id}, {"prompt", prompt}, {"temperature", temperature}};
        return sha256_hex(key.dump());
    }
};

/// Decoding parameters shared by every request of a run.
struct CompletionSettings {
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::string model_id = "gpt-3.5-turbo";

    CompletionRequest request(std::string prompt) const {
        return {std::move(prompt), temperature, max_output_tokens, model_id};
    }
};

enum class ResponseSource { live, cache, mock };

inline const char* to_string(ResponseSource s) {
    switch (s) {
        case ResponseSource::live: return "live";
        case ResponseSource::cache: return "cache";
        case ResponseSource::mock: return "mock";
    }
    return "unknown";
}

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t output_tokens = 0;
};

struct CompletionResponse {
    std::string text;
    Usage usage;
    ResponseSource source = ResponseSource::mock;
};

/// A chat-completion backend. Implementations must be safe for concurrent callers
/// unless documented otherwise.
class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

/// Answers through a caller-supplied function. Never touches the network.
class CallbackBackend final : public Backend {
public:
    using Responder = std::function<std::string(const CompletionRequest&)>;

    explicit CallbackBackend(Responder responder) : responder_(std::move(responder)) {}

    CompletionResponse complete(const CompletionRequest& request) override {
        ++calls_;
        std::string text = responder_(request);
        Usage usage{static_cast<std::int64_t>(approx_tokens(request.prompt)),
                    static_cast<std::int64_t>(approx_tokens(text))};
        return {std::move(text), usage, ResponseSource::mock};
    }

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    Responder responder_;
    std::atomic<std::size_t> calls_{0};
};

/// Scripted responses, matched by request digest first and then by call ordinal.
///
/// Script file: JSONL of {"match": "digest"|"ordinal", "key": ..., "response_text": ...}.
/// Ordinal entries depend on call order, so a script holding any must be driven
/// from a single thread; a second calling thread gets BackendError(usage).
class ScriptedMock final : public Backend {
public:
    void add_digest(std::string digest, std::string response) { by_digest_[std::move(digest)] = std::move(response); }
    void add_ordinal(std::size_t position, std::string response) { by_ordinal_[position] = std::move(response); }

    static std::unique_ptr<ScriptedMock> from_jsonl(std::string_view content,
                                                    const std::string& origin = "<script>") {
        auto mock = std::make_unique<ScriptedMock>();
        std::istringstream in{std::string(content)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (text::trim(line).empty()) continue;
            const auto where = origin + ":" + std::to_string(line_no);
            nlohmann::json entry;
            try {
                entry = nlohmann::json::parse(line);
                const auto match = entry.at("match").get<std::string>();
                auto response = entry.at("response_text").get<std::string>();
                const auto& key = entry.at("key");
                if (match == "digest") {
                    mock->add_digest(key.get<std::string>(), std::move(response));
                } else if (match == "ordinal") {
                    const auto position = key.is_string() ? std::stoull(key.get<std::string>())
                                                          : key.get<std::size_t>();
                    mock->add_ordinal(position, std::move(response));
                } else {
                    throw ConfigError(where + ": match must be \"digest\" or \"ordinal\"");
                }
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(where + ": " + e.what());
            } catch (const std::logic_error&) {
                throw ConfigError(where + ": bad ordinal key");
            }
        }
        return mock;
    }

    static std::unique_ptr<ScriptedMock> from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read mock script " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_jsonl(buf.str(), path.string());
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        std::lock_guard lock(mutex_);
        if (!by_ordinal_.empty()) {
            const auto me = std::this_thread::get_id();
            if (!owner_) owner_ = me;
            if (*owner_ != me)
                throw BackendError(BackendErrorKind::usage,
                                   "ordinal mock script used from more than one thread");
        }
        const std::size_t position = calls_++;
        const std::string digest = request.digest();
        const std::string* text = nullptr;
        if (auto it = by_digest_.find(digest); it != by_digest_.end()) {
            text = &it->second;
        } else if (auto jt = by_ordinal_.find(position); jt != by_ordinal_.end()) {
            text = &jt->second;
        }
        if (!text) throw MockMiss("no scripted response for call " + std::to_string(position) + " (digest " + digest + ")");
        Usage usage{static_cast<std::int64_t>(approx_tokens(request.prompt)),
                    static_cast<std::int64_t>(approx_tokens(*text))};
        return {*text, usage, ResponseSource::mock};
    }

    std::size_t calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

private:
    std::unordered_map<std::string, std::string> by_digest_;
    std::map<std::size_t, std::string> by_ordinal_;
    mutable std::mutex mutex_;
    std::size_t calls_ = 0;
    std::optional<std::thread::id> owner_;
};

struct CacheStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t size_bytes = 0;

    friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

/// Append-only JSONL response cache in front of an optional upstream backend.
///
/// Each ledger line is {"digest", "model", "response_text", "prompt_tokens",
/// "output_tokens"}. Without an upstream the cache is read-only and every miss
/// fails with BackendError(cache_miss). A torn final line left by a crash is skipped.
class CachedBackend final : public Backend {
public:
    explicit CachedBackend(std::filesystem::path ledger, Backend* upstream = nullptr)
        : ledger_(std::move(ledger)), upstream_(upstream) {
        if (std::filesystem::exists(ledger_)) load();
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        const std::string digest = request.digest();
        {
            std::lock_guard lock(mutex_);
            if (auto it = entries_.find(digest); it != entries_.end()) {
                ++stats_.hits;
                CompletionResponse hit = it->second;
                hit.source = ResponseSource::cache;
                return hit;
            }
            ++stats_.misses;
        }
        if (!upstream_) throw BackendError(BackendErrorKind::cache_miss, "no cached response for digest " + digest);
        CompletionResponse fresh = upstream_->complete(request);
        store(digest, request.model_id, fresh);
        return fresh;
    }

    /// Counters for this process; size_bytes is the ledger's size on disk.
    CacheStats cache_stats() const {
        std::lock_guard lock(mutex_);
        return stats_;
    }

    std::size_t entries() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

    const std::filesystem::path& ledger_path() const noexcept { return ledger_; }

private:
    void load() {
        std::ifstream in(ledger_, std::ios::binary);
        if (!in) throw IoError("cannot read cache ledger " + ledger_.string());
        std::string line;
        while (std::getline(in, line)) {
            stats_.size_bytes += line.size() + 1;
            try {
                const auto entry = nlohmann::json::parse(line);
                CompletionResponse r;
                r.text = entry.at("response_text").get<std::string>();
                r.usage.prompt_tokens = entry.value("prompt_tokens", 0);
                r.usage.output_tokens = entry.value("output_tokens", 0);
                entries_[entry.at("digest").get<std::string>()] = std::move(r);
            } catch (const nlohmann::json::exception&) {
                continue;
            }
        }
        stats_.size_bytes = std::filesystem::file_size(ledger_);
        if (stats_.size_bytes > 0) {
            std::ifstream tail(ledger_, std::ios::binary);
            tail.seekg(-1, std::ios::end);
            needs_newline_ = tail.get() != '\n';
        }
    }

    void store(const std::string& digest, const std::string& model, const CompletionResponse& response) {
        const nlohmann::json entry = {{"digest", digest},
                                      {"model", model},
                                      {"response_text", response.text},
                                      {"prompt_tokens", response.usage.prompt_tokens},
                                      {"output_tokens", response.usage.output_tokens}};
        std::string line = entry.dump() + "\n";
        std::lock_guard lock(mutex_);
        if (entries_.count(digest)) return;  // a concurrent caller stored it first
        if (needs_newline_) {
            line.insert(line.begin(), '\n');
            needs_newline_ = false;
        }
        if (ledger_.has_parent_path()) std::filesystem::create_directories(ledger_.parent_path());
        std::ofstream out(ledger_, std::ios::app | std::ios::binary);
        if (!out) throw IoError("cannot append to cache ledger " + ledger_.string());
        out << line;
        out.flush();
        if (!out) throw IoError("write to cache ledger failed: " + ledger_.string());
        stats_.size_bytes += line.size();
        entries_[digest] = response;
    }

    std::filesystem::path ledger_;
    Backend* upstream_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, CompletionResponse> entries_;
    CacheStats stats_;
    bool needs_newline_ = false;
};

}  // namespace seridst::llm
