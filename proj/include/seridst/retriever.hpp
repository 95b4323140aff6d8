#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "seridst/corpus.hpp"
#include "seridst/lenient.hpp"
#include "seridst/llmclient.hpp"
#include "seridst/similarity.hpp"

namespace seridst {

enum class RetrievalMethod { self, self_no_explain, random };

inline const char* to_string(RetrievalMethod m) {
    switch (m) {
        case RetrievalMethod::self: return "self";
        case RetrievalMethod::self_no_explain: return "self_no_explain";
        case RetrievalMethod::random: return "random";
    }
    return "unknown";
}

inline RetrievalMethod parse_retrieval_method(std::string_view tag) {
    if (tag == "self") return RetrievalMethod::self;
    if (tag == "self_no_explain") return RetrievalMethod::self_no_explain;
    if (tag == "random") return RetrievalMethod::random;
    throw ConfigError("unknown retrieval method '" + std::string(tag) + "'");
}

/// Upper bound on prompt size in approximate tokens; 0 disables the check.
struct PromptBudget {
    std::size_t max_tokens = 0;

    void check(const std::string& prompt) const {
        if (max_tokens == 0) return;
        const auto tokens = llm::approx_tokens(prompt);
        if (tokens > max_tokens) throw PromptTooLong(tokens, max_tokens);
    }
};

struct RetrievalRequest {
    TestInstance test_instance;
    std::vector<Candidate> candidates;
    std::string target_domain;
    std::vector<SlotName> target_slots;
    std::size_t m = 3;
    bool with_explanations = true;

    void validate() const {
        if (m == 0) throw ConfigError("m must be at least 1");
        if (m > candidates.size())
            throw ConfigError("m=" + std::to_string(m) + " exceeds " + std::to_string(candidates.size()) +
                              " candidates");
        for (std::size_t i = 0; i < candidates.size(); ++i)
            if (candidates[i].index != i) throw ConfigError("candidate indices must run 0..n-1");
        for (const auto& slot : target_slots)
            if (slot.domain != target_domain)
                throw ConfigError("target slot " + slot.str() + " is outside " + target_domain);
    }
};

struct RetrievedSet {
    std::vector<Candidate> chosen;
    std::vector<std::string> explanations;
    RetrievalMethod method = RetrievalMethod::self;
    std::string raw_response;
    /// Set when the model never produced a usable answer; chosen is then empty.
    bool failed = false;
};

/// The self-retrieval prompt: the test utterance, the slots to infer, and every
/// candidate with its index and label.
inline std::string build_retrieval_prompt(const RetrievalRequest& req, const PromptBudget& budget = {}) {
    req.validate();
    std::ostringstream out;
    out << "I'm finding helpful exampels to solve following dialgoue state tracking problem in domain "
           "transfer enviroment\n";
    out << "curr : [user] " << req.test_instance.current_user << "\n";
    out << "slots to be inference : [";
    for (std::size_t i = 0; i < req.target_slots.size(); ++i) {
        if (i) out << ", ";
        out << "'-" << req.target_slots[i].slot << "'";
    }
    out << "]\n";
    out << "for " << req.target_domain << " domain\n";
    out << "please return the most useful " << req.m << " example's from below";
    if (req.with_explanations) out << ", with simple explanation why it is helpful than others";
    out << " for domain transfer " << req.target_domain << "\n";
    for (const auto& c : req.candidates) {
        out << "\n";
        out << "Example Number : " << c.index << "\n";
        out << "curr : [user] " << c.utterance << "\n";
        out << "label: " << c.label.render() << "\n";
    }
    out << "\n";
    if (req.with_explanations)
        out << "Output format must be '{answer : [], explanation : ), to be parsed easily.\n";
    else
        out << "Output format must be '{answer : []}', to be parsed easily.\n";
    std::string prompt = out.str();
    budget.check(prompt);
    return prompt;
}

struct ParsedRetrieval {
    std::vector<std::size_t> indices;
    std::vector<std::string> explanations;
};

namespace detail {

inline std::vector<std::string> read_explanations(std::string_view text) {
    std::vector<std::string> out;
    auto pos = lenient::find_key(text, "explanation", 0, true);
    if (!pos || *pos >= text.size()) return out;
    const char c = text[*pos];
    if (lenient::is_quote(c)) {
        if (auto q = lenient::read_quoted(text, *pos)) out.push_back(std::move(q->first));
        return out;
    }
    if (c != '[') {
        // Unquoted prose: keep up to the closing brace or end of text.
        auto rest = text.substr(*pos);
        if (auto brace = rest.rfind('}'); brace != std::string_view::npos) rest = rest.substr(0, brace);
        auto trimmed = text::trim(rest);
        if (!trimmed.empty() && trimmed != ")") out.emplace_back(trimmed);
        return out;
    }
    const auto close = lenient::matching_close(text, *pos);
    const std::size_t end = close ? *close : text.size();
    for (std::size_t i = *pos + 1; i < end; ++i) {
        if (!lenient::is_quote(text[i])) continue;
        auto q = lenient::read_quoted(text, i);
        if (!q) break;
        out.push_back(std::move(q->first));
        i = q->second - 1;
    }
    return out;
}

inline long long parse_index_item(std::string_view item) {
    item = text::trim(item);
    while (!item.empty() && lenient::is_quote(item.front())) item.remove_prefix(1);
    while (!item.empty() && lenient::is_quote(item.back())) item.remove_suffix(1);
    item = text::trim(item);
    if (item.empty()) throw ParseError("empty entry in answer list");
    std::size_t i = 0;
    bool negative = false;
    if (item[0] == '-' || item[0] == '+') {
        negative = item[0] == '-';
        i = 1;
    }
    if (i == item.size()) throw ParseError("non-numeric entry in answer list");
    long long value = 0;
    for (; i < item.size(); ++i) {
        if (item[i] < '0' || item[i] > '9')
            throw ParseError("non-numeric entry '" + std::string(item) + "' in answer list");
        if (value > 1'000'000'000) throw ParseError("index too large");
        value = value * 10 + (item[i] - '0');
    }
    return negative ? -value : value;
}

}  // namespace detail

/// Extracts the chosen indices (and explanations, when present) from a model reply.
///
/// Accepts JSON and the looser "{answer : [...], explanation : [...]}" shape with
/// either quote style, code fences or surrounding prose. Duplicates are dropped
/// keeping first occurrence, then the list is cut to m.
inline ParsedRetrieval parse_retrieval_response(std::string_view text, std::size_t n_candidates, std::size_t m) {
    if (n_candidates == 0) throw ConfigError("parse_retrieval_response needs at least one candidate");
    auto pos = lenient::find_key(text, "answer", 0, true);
    if (!pos) throw ParseError("no answer list in response");
    if (*pos >= text.size() || text[*pos] != '[') throw ParseError("answer is not followed by a list");
    const auto close = text.find(']', *pos);
    if (close == std::string_view::npos) throw ParseError("unterminated answer list");
    const auto body = text.substr(*pos + 1, close - *pos - 1);
    if (text::trim(body).empty()) throw ParseError("empty answer list");

    std::vector<long long> raw;
    for (const auto& item : text::split(body, ',')) raw.push_back(detail::parse_index_item(item));
    for (auto v : raw)
        if (v < 0 || v >= static_cast<long long>(n_candidates)) throw IndexOutOfRange(v, n_candidates);

    auto explanations = detail::read_explanations(text.substr(close));
    const bool aligned = explanations.size() == raw.size();

    ParsedRetrieval out;
    std::unordered_set<long long> seen;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!seen.insert(raw[i]).second) continue;
        out.indices.push_back(static_cast<std::size_t>(raw[i]));
        if (aligned) out.explanations.push_back(explanations[i]);
    }
    if (!aligned) out.explanations = std::move(explanations);
    if (out.indices.size() > m) out.indices.resize(m);
    if (out.explanations.size() > m) out.explanations.resize(m);
    return out;
}

/// Sends the retrieval prompt, resending it on unparseable replies up to `retries` times.
inline RetrievedSet retrieve_examples(const RetrievalRequest& req, llm::Backend& backend, int retries,
                                      const llm::CompletionSettings& settings = {},
                                      const PromptBudget& budget = {}) {
    if (retries < 0) throw ConfigError("retries must be non-negative");
    const auto request = settings.request(build_retrieval_prompt(req, budget));
    std::string last;
    std::string last_error;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        last = backend.complete(request).text;
        try {
            auto parsed = parse_retrieval_response(last, req.candidates.size(), req.m);
            RetrievedSet out;
            out.method = req.with_explanations ? RetrievalMethod::self : RetrievalMethod::self_no_explain;
            for (auto i : parsed.indices) out.chosen.push_back(req.candidates[i]);
            out.explanations = std::move(parsed.explanations);
            out.raw_response = last;
            return out;
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw RetrievalFailed("retrieval failed after " + std::to_string(retries + 1) + " attempts: " + last_error,
                          last);
}

/// Uniform draw of m candidates without replacement, in draw order.
inline RetrievedSet random_baseline(const std::vector<Candidate>& candidates, std::size_t m, std::uint64_t seed) {
    if (m > candidates.size())
        throw NotEnoughCandidates("need " + std::to_string(m) + " candidates, have " +
                                  std::to_string(candidates.size()));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    RetrievedSet out;
    out.method = RetrievalMethod::random;
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
        out.chosen.push_back(candidates[order[i]]);
    }
    return out;
}

}  // namespace seridst
