#include <gtest/gtest.h>

#include <thread>

#include "local_server.hpp"
#include "seridst/http_backend.hpp"
#include "seridst/llmclient.hpp"
#include "test_support.hpp"

using namespace seridst;
using namespace seridst::llm;
using testing_support::TempDir;

namespace {

CompletionRequest req(const std::string& prompt) { return CompletionSettings{}.request(prompt); }

LiveConfig local_config(const std::string& endpoint) {
    LiveConfig c;
    c.endpoint = endpoint;
    c.api_key = "test-key";
    c.timeout = std::chrono::seconds(5);
    return c;
}

}  // namespace

TEST(Digest, DependsOnPromptModelAndTemperatureOnly) {
    auto a = req("hello");
    auto b = req("hello");
    EXPECT_EQ(a.digest(), b.digest());
    EXPECT_EQ(a.digest().size(), 64u);
    b.max_output_tokens = 9;
    EXPECT_EQ(a.digest(), b.digest());
    b.temperature = 0.7;
    EXPECT_NE(a.digest(), b.digest());
    EXPECT_NE(a.digest(), req("hello!").digest());
    auto c = req("hello");
    c.model_id = "other";
    EXPECT_NE(a.digest(), c.digest());
}

TEST(Sha256, KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ScriptedMock, MatchesDigestThenOrdinal) {
    const auto script = nlohmann::json{{"match", "digest"}, {"key", req("known").digest()}, {"response_text", "by digest"}}.dump() +
                        "\n" + R"({"match": "ordinal", "key": 1, "response_text": "second call"})" + "\n";
    auto mock = ScriptedMock::from_jsonl(script);
    EXPECT_EQ(mock->complete(req("known")).text, "by digest");
    EXPECT_EQ(mock->complete(req("anything")).text, "second call");
    EXPECT_THROW(mock->complete(req("anything")), MockMiss);
    EXPECT_EQ(mock->calls(), 3u);
}

TEST(ScriptedMock, OrdinalScriptsRefuseSecondThread) {
    auto mock = ScriptedMock::from_jsonl(R"({"match": "ordinal", "key": 0, "response_text": "x"})");
    EXPECT_EQ(mock->complete(req("a")).text, "x");
    std::thread other([&] {
        try {
            mock->complete(req("b"));
            ADD_FAILURE() << "expected BackendError";
        } catch (const BackendError& e) {
            EXPECT_EQ(e.kind(), BackendErrorKind::usage);
        }
    });
    other.join();
}

TEST(ScriptedMock, RejectsBadScripts) {
    EXPECT_THROW(ScriptedMock::from_jsonl("not json"), ConfigError);
    EXPECT_THROW(ScriptedMock::from_jsonl(R"({"match": "regex", "key": "x", "response_text": "y"})"), ConfigError);
    EXPECT_THROW(ScriptedMock::from_jsonl(R"({"match": "ordinal", "key": "abc", "response_text": "y"})"), ConfigError);
    EXPECT_THROW(ScriptedMock::from_file("/nonexistent/script.jsonl"), ConfigError);
}

TEST(CachedBackend, MissThenHitAndPersists) {
    TempDir dir;
    CallbackBackend upstream([](const CompletionRequest& r) { return "echo:" + r.prompt; });
    {
        CachedBackend cache(dir / "cache.jsonl", &upstream);
        EXPECT_EQ(cache.complete(req("p1")).text, "echo:p1");
        const auto again = cache.complete(req("p1"));
        EXPECT_EQ(again.text, "echo:p1");
        EXPECT_EQ(again.source, ResponseSource::cache);
        cache.complete(req("p2"));
        EXPECT_EQ(cache.cache_stats().hits, 1u);
        EXPECT_EQ(cache.cache_stats().misses, 2u);
    }
    EXPECT_EQ(upstream.calls(), 2u);
    CachedBackend reopened(dir / "cache.jsonl");
    EXPECT_EQ(reopened.entries(), 2u);
    EXPECT_EQ(reopened.complete(req("p2")).text, "echo:p2");
    try {
        reopened.complete(req("p3"));
        FAIL() << "expected cache miss";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendErrorKind::cache_miss);
    }
}

TEST(CachedBackend, StatsAgreeWithLedgerRecount) {
    TempDir dir;
    CallbackBackend upstream([](const CompletionRequest& r) { return r.prompt + r.prompt; });
    CachedBackend cache(dir / "cache.jsonl", &upstream);
    for (int i = 0; i < 25; ++i) cache.complete(req("prompt " + std::to_string(i % 10)));
    const auto stats = cache.cache_stats();
    EXPECT_EQ(stats.hits + stats.misses, 25u);
    EXPECT_EQ(stats.misses, testing_support::count_lines(dir / "cache.jsonl"));
    EXPECT_EQ(stats.size_bytes, std::filesystem::file_size(dir / "cache.jsonl"));
    EXPECT_EQ(cache.entries(), 10u);
}

TEST(CachedBackend, SkipsTornFinalLine) {
    TempDir dir;
    CallbackBackend upstream([](const CompletionRequest&) { return std::string("fresh"); });
    {
        CachedBackend cache(dir / "cache.jsonl", &upstream);
        cache.complete(req("kept"));
    }
    {
        std::ofstream out(dir / "cache.jsonl", std::ios::app);
        out << R"({"digest": "abc", "response_te)";
    }
    CachedBackend cache(dir / "cache.jsonl", &upstream);
    EXPECT_EQ(cache.entries(), 1u);
    cache.complete(req("new"));
    CachedBackend reread(dir / "cache.jsonl");
    EXPECT_EQ(reread.entries(), 2u);
}

TEST(LiveBackend, RetriesRateLimitThenSucceeds) {
    testing_support::LocalChatServer server([](const nlohmann::json& body, int hit) -> std::pair<int, std::string> {
        if (hit == 1) return {429, "slow down"};
        return {200, "reply to " + body.at("messages").at(0).at("content").get<std::string>()};
    });
    std::vector<std::chrono::milliseconds> sleeps;
    LiveBackend live(local_config(server.endpoint()), [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    const auto r = live.complete(req("ping"));
    EXPECT_EQ(r.text, "reply to ping");
    EXPECT_EQ(r.source, ResponseSource::live);
    EXPECT_EQ(r.usage.prompt_tokens, 10);
    EXPECT_EQ(server.hits(), 2);
    EXPECT_EQ(live.attempts(), 2u);
    ASSERT_EQ(sleeps.size(), 1u);
    EXPECT_GE(sleeps[0].count(), 750);
    EXPECT_LE(sleeps[0].count(), 1000);
}

TEST(LiveBackend, BackoffGrowsAndGivesUp) {
    testing_support::LocalChatServer server(
        [](const nlohmann::json&, int) -> std::pair<int, std::string> { return {503, "unavailable"}; });
    std::vector<std::chrono::milliseconds> sleeps;
    LiveBackend live(local_config(server.endpoint()), [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    try {
        live.complete(req("ping"));
        FAIL() << "expected BackendError";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendErrorKind::transient);
    }
    EXPECT_EQ(server.hits(), 5);
    ASSERT_EQ(sleeps.size(), 4u);
    for (std::size_t i = 1; i < sleeps.size(); ++i) EXPECT_GT(sleeps[i], sleeps[i - 1]);
    EXPECT_GE(sleeps[3].count(), 6000);
}

TEST(LiveBackend, AuthFailureIsNotRetried) {
    testing_support::LocalChatServer server(
        [](const nlohmann::json&, int) -> std::pair<int, std::string> { return {401, "bad key"}; });
    LiveBackend live(local_config(server.endpoint()), [](std::chrono::milliseconds) {});
    try {
        live.complete(req("ping"));
        FAIL() << "expected BackendError";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendErrorKind::auth);
    }
    EXPECT_EQ(server.hits(), 1);
}

TEST(LiveBackend, ConnectivityFailureIsTyped) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    LiveBackend live(local_config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"),
                     [](std::chrono::milliseconds) {});
    try {
        live.complete(req("ping"));
        FAIL() << "expected BackendError";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendErrorKind::connectivity);
    }
}

TEST(LiveBackend, WireFormat) {
    const auto body = chat_request_body(req("hi"));
    EXPECT_EQ(body.at("model"), "gpt-3.5-turbo");
    EXPECT_EQ(body.at("messages").at(0).at("role"), "user");
    EXPECT_EQ(body.at("temperature"), 0.0);
    EXPECT_THROW(parse_chat_response("{\"choices\": []}"), BackendError);
    EXPECT_THROW(parse_chat_response("<html>"), BackendError);
    EXPECT_EQ(split_endpoint("https://api.example.com/v1/chat"), (std::pair<std::string, std::string>{"https://api.example.com", "/v1/chat"}));
    EXPECT_THROW(split_endpoint("api.example.com"), ConfigError);
}
