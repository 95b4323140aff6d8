#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "seridst/retriever.hpp"

using namespace seridst;

namespace {

std::vector<Candidate> make_candidates(std::size_t n) {
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < n; ++i) {
        Candidate c;
        c.index = i;
        c.doc_id = {"c" + std::to_string(i), 1};
        c.utterance = "utterance " + std::to_string(i);
        c.label.set(SlotName::from("hotel-area"), SlotValue::concrete("north"));
        out.push_back(c);
    }
    return out;
}

RetrievalRequest make_request(std::size_t n, std::size_t m, bool explain = true) {
    RetrievalRequest req;
    req.test_instance.dialogue_id = "t";
    req.test_instance.turn_index = 1;
    req.test_instance.current_user = "i want to see a museum in the centre";
    req.candidates = make_candidates(n);
    req.target_domain = "attraction";
    req.target_slots = domain_slots("attraction");
    req.m = m;
    req.with_explanations = explain;
    return req;
}

}  // namespace

TEST(RetrievalPrompt, HasTheFixedWording) {
    const auto prompt = build_retrieval_prompt(make_request(2, 2));
    EXPECT_EQ(prompt.rfind("I'm finding helpful exampels to solve following dialgoue state tracking problem in domain "
                           "transfer enviroment\n",
                           0),
              0u);
    EXPECT_NE(prompt.find("curr : [user] i want to see a museum in the centre\n"), std::string::npos);
    EXPECT_NE(prompt.find("slots to be inference : ['-area', '-name', '-type']\nfor attraction domain\n"),
              std::string::npos);
    EXPECT_NE(prompt.find("please return the most useful 2 example's from below, with simple explanation why it is "
                          "helpful than others for domain transfer attraction\n"),
              std::string::npos);
    EXPECT_NE(prompt.find("Example Number : 0\ncurr : [user] utterance 0\nlabel: hotel-area : north\n"),
              std::string::npos);
    EXPECT_NE(prompt.find("Example Number : 1\n"), std::string::npos);
    EXPECT_TRUE(prompt.ends_with("Output format must be '{answer : [], explanation : ), to be parsed easily.\n"));
}

TEST(RetrievalPrompt, NoExplanationVariant) {
    const auto prompt = build_retrieval_prompt(make_request(3, 3, false));
    EXPECT_EQ(prompt.find("simple explanation"), std::string::npos);
    EXPECT_NE(prompt.find("please return the most useful 3 example's from below for domain transfer attraction\n"),
              std::string::npos);
    EXPECT_TRUE(prompt.ends_with("Output format must be '{answer : []}', to be parsed easily.\n"));
}

TEST(RetrievalPrompt, ValidatesRequest) {
    EXPECT_THROW(build_retrieval_prompt(make_request(2, 3)), ConfigError);
    EXPECT_THROW(build_retrieval_prompt(make_request(2, 0)), ConfigError);
    auto req = make_request(3, 2);
    req.candidates[1].index = 5;
    EXPECT_THROW(build_retrieval_prompt(req), ConfigError);
    req = make_request(3, 2);
    req.target_slots = domain_slots("hotel");
    EXPECT_THROW(build_retrieval_prompt(req), ConfigError);
}

TEST(RetrievalPrompt, BudgetIsEnforced) {
    EXPECT_THROW(build_retrieval_prompt(make_request(20, 3), PromptBudget{50}), PromptTooLong);
    EXPECT_NO_THROW(build_retrieval_prompt(make_request(20, 3), PromptBudget{0}));
    try {
        build_retrieval_prompt(make_request(20, 3), PromptBudget{50});
    } catch (const PromptTooLong& e) {
        EXPECT_EQ(e.budget(), 50u);
        EXPECT_GT(e.tokens(), 50u);
    }
}

TEST(ParseRetrieval, ReadsIndicesAndExplanations) {
    const auto r = parse_retrieval_response(
        "{answer : [2, 0, 5], explanation : [\"same slots\", \"similar phrasing\", \"asks for area\"]}", 6, 3);
    EXPECT_EQ(r.indices, (std::vector<std::size_t>{2, 0, 5}));
    EXPECT_EQ(r.explanations, (std::vector<std::string>{"same slots", "similar phrasing", "asks for area"}));
}

TEST(ParseRetrieval, DeduplicatesAndTruncates) {
    const auto r = parse_retrieval_response("{\"answer\": [1, 1, 3, 4], \"explanation\": [\"a\", \"b\", \"c\", \"d\"]}", 5, 2);
    EXPECT_EQ(r.indices, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(r.explanations, (std::vector<std::string>{"a", "c"}));
}

TEST(ParseRetrieval, ToleratesLooseShapes) {
    EXPECT_EQ(parse_retrieval_response("Sure! ```json\n{'answer': ['3', '1']}\n```", 4, 3).indices,
              (std::vector<std::size_t>{3, 1}));
    EXPECT_EQ(parse_retrieval_response("ANSWER = [0]", 4, 3).indices, (std::vector<std::size_t>{0}));
    EXPECT_EQ(parse_retrieval_response("{answers: [2 , 3]}", 4, 3).indices, (std::vector<std::size_t>{2, 3}));
}

TEST(ParseRetrieval, TypedErrors) {
    EXPECT_THROW(parse_retrieval_response("{answer : [], explanation : )", 5, 3), ParseError);
    EXPECT_THROW(parse_retrieval_response("no list here", 5, 3), ParseError);
    EXPECT_THROW(parse_retrieval_response("{answer : [1, two]}", 5, 3), ParseError);
    EXPECT_THROW(parse_retrieval_response("{answer : [1, 2", 5, 3), ParseError);
    EXPECT_THROW(parse_retrieval_response("{answer : [7]}", 5, 3), IndexOutOfRange);
    EXPECT_THROW(parse_retrieval_response("{answer : [-1]}", 5, 3), IndexOutOfRange);
    EXPECT_THROW(parse_retrieval_response("{answer : [0]}", 0, 3), ConfigError);
}

TEST(RetrieveExamples, ResendsUntilParseable) {
    int calls = 0;
    llm::CallbackBackend backend([&](const llm::CompletionRequest&) {
        return ++calls == 1 ? std::string("I cannot decide") : std::string("{answer : [1], explanation : [\"x\"]}");
    });
    const auto got = retrieve_examples(make_request(3, 1), backend, 2);
    EXPECT_EQ(calls, 2);
    ASSERT_EQ(got.chosen.size(), 1u);
    EXPECT_EQ(got.chosen[0].doc_id.dialogue_id, "c1");
    EXPECT_EQ(got.method, RetrievalMethod::self);
    EXPECT_EQ(got.explanations, (std::vector<std::string>{"x"}));
}

TEST(RetrieveExamples, RaisesAfterRetriesAreExhausted) {
    llm::CallbackBackend backend([](const llm::CompletionRequest&) { return std::string("{answer : [9]}"); });
    try {
        retrieve_examples(make_request(3, 1, false), backend, 2);
        FAIL() << "expected RetrievalFailed";
    } catch (const RetrievalFailed& e) {
        EXPECT_EQ(e.last_response(), "{answer : [9]}");
    }
    EXPECT_EQ(backend.calls(), 3u);
}

TEST(RandomBaseline, IsSeededAndWithoutReplacement) {
    const auto cands = make_candidates(10);
    const auto a = random_baseline(cands, 4, 99);
    const auto b = random_baseline(cands, 4, 99);
    ASSERT_EQ(a.chosen.size(), 4u);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a.chosen[i].index, b.chosen[i].index);
        seen.insert(a.chosen[i].index);
    }
    EXPECT_EQ(seen.size(), 4u);
    EXPECT_EQ(a.method, RetrievalMethod::random);
    EXPECT_TRUE(a.explanations.empty());
    EXPECT_THROW(random_baseline(cands, 11, 1), NotEnoughCandidates);
    EXPECT_TRUE(random_baseline(cands, 0, 1).chosen.empty());
}

// Each of n candidates is chosen with probability m/n per draw.
TEST(RandomBaseline, InclusionFrequenciesAreUniform) {
    const std::size_t n = 8;
    const std::size_t m = 3;
    const int draws = 10000;
    const auto cands = make_candidates(n);
    std::map<std::size_t, int> hits;
    for (int s = 0; s < draws; ++s)
        for (const auto& c : random_baseline(cands, m, static_cast<std::uint64_t>(s)).chosen) ++hits[c.index];
    const double p = static_cast<double>(m) / n;
    const double mean = draws * p;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (std::size_t i = 0; i < n; ++i) EXPECT_LE(std::abs(hits[i] - mean), 3 * sigma) << "candidate " << i;
}

TEST(RetrievalMethod, RoundTripsNames) {
    for (auto m : {RetrievalMethod::self, RetrievalMethod::self_no_explain, RetrievalMethod::random})
        EXPECT_EQ(parse_retrieval_method(to_string(m)), m);
    EXPECT_THROW(parse_retrieval_method("bm25"), ConfigError);
}
