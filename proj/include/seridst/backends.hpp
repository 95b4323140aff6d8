#pragma once

#include <memory>
#include <optional>

#include "seridst/http_backend.hpp"
#include "seridst/llmclient.hpp"
#include "seridst/pipeline.hpp"

namespace seridst {

/// The backend chain a config asks for: live or mock, optionally behind a cache.
/// cache-only is a cache with nothing behind it.
class BackendStack {
public:
    explicit BackendStack(const RunConfig& config, llm::LiveBackend::Sleeper sleeper = {}) {
        switch (config.backend) {
            case BackendMode::mock:
                inner_ = llm::ScriptedMock::from_file(config.mock_script);
                break;
            case BackendMode::live: {
                auto live = llm::LiveConfig::from_environment();
                live.max_in_flight = config.max_in_flight;
                live.min_interval = std::chrono::milliseconds(config.min_interval_ms);
                inner_ = std::make_unique<llm::LiveBackend>(live, std::move(sleeper));
                break;
            }
            case BackendMode::cache_only:
                break;
        }
        if (!config.cache_path.empty()) cache_ = std::make_unique<llm::CachedBackend>(config.cache_path, inner_.get());
    }

    llm::Backend& backend() { return cache_ ? static_cast<llm::Backend&>(*cache_) : *inner_; }

    std::optional<llm::CacheStats> cache_stats() const {
        if (!cache_) return std::nullopt;
        return cache_->cache_stats();
    }

private:
    std::unique_ptr<llm::Backend> inner_;
    std::unique_ptr<llm::CachedBackend> cache_;
};

inline nlohmann::json to_json(const llm::CacheStats& s) {
    return {{"hits", s.hits}, {"misses", s.misses}, {"size_bytes", s.size_bytes}};
}

}  // namespace seridst
