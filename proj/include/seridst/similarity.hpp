#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seridst/corpus.hpp"
#include "seridst/errors.hpp"
#include "seridst/text.hpp"

namespace seridst {

/// Identifies one pooled example: a user turn of a dialogue.
struct DocId {
    std::string dialogue_id;
    int turn_index = 0;

    friend auto operator<=>(const DocId&, const DocId&) = default;
    friend bool operator==(const DocId&, const DocId&) = default;
};

/// A (u_i, b_i) pair available as an in-context example.
struct PoolEntry {
    DocId id;
    std::string utterance;
    std::string history = "None";  // rendered prior exchange
    BeliefState label;
};

struct Candidate {
    std::size_t index = 0;  // 0-based rank in the filtered list
    DocId doc_id;
    std::string utterance;
    std::string history = "None";
    BeliefState label;
    double score = 0.0;
};

/// Lowercase, split on non-alphanumeric runs. No stemming, no stopwords.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (text::is_alnum(c)) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Every user turn of the corpus as a pool entry, labelled with its turn-level state.
inline std::vector<PoolEntry> candidate_pool(const Corpus& corpus) {
    std::vector<PoolEntry> pool;
    for (const auto& d : corpus.dialogues()) {
        for (std::size_t i = 0; i < d.turns.size(); ++i) {
            const auto& turn = d.turns[i];
            PoolEntry e;
            e.id = {d.id, turn.index};
            e.utterance = turn.user_utterance;
            if (i > 0)
                e.history = "[user] " + d.turns[i - 1].user_utterance + " [system] " +
                            d.turns[i - 1].system_utterance;
            e.label = turn.gold_turn_state;
            pool.push_back(std::move(e));
        }
    }
    return pool;
}

/// Okapi BM25 over pooled user utterances.
///
/// idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1), which is never negative. Query
/// tokens are summed with multiplicity. Immutable once built.
class Bm25Index {
public:
    static Bm25Index build(std::vector<PoolEntry> pool, Bm25Params params = {}) {
        Bm25Index index;
        index.params_ = params;
        std::size_t total_length = 0;
        index.docs_.reserve(pool.size());
        for (auto& entry : pool) {
            Document doc;
            for (auto& token : tokenize(entry.utterance)) {
                ++doc.term_counts[token];
                ++doc.length;
            }
            total_length += doc.length;
            const std::size_t position = index.docs_.size();
            for (const auto& [term, _] : doc.term_counts) index.postings_[term].push_back(position);
            index.by_id_.emplace(entry.id, position);  // first occurrence wins on duplicate ids
            doc.entry = std::move(entry);
            index.docs_.push_back(std::move(doc));
        }
        if (!index.docs_.empty())
            index.avg_length_ = static_cast<double>(total_length) / static_cast<double>(index.docs_.size());
        return index;
    }

    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Bm25Params& params() const noexcept { return params_; }
    double average_length() const noexcept { return avg_length_; }

    std::size_t document_frequency(const std::string& term) const {
        auto it = postings_.find(term);
        return it == postings_.end() ? 0 : it->second.size();
    }

    double idf(const std::string& term) const {
        const double n = static_cast<double>(docs_.size());
        const double df = static_cast<double>(document_frequency(term));
        return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    }

    double score(std::span<const std::string> query, const DocId& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end())
            throw UnknownDocument("no document " + id.dialogue_id + "#" + std::to_string(id.turn_index));
        return score_at(query, it->second);
    }

    /// Up to k candidates by descending score, ties by doc id ascending. Zero scores are dropped.
    std::vector<Candidate> top_k(std::string_view query, std::size_t k) const {
        if (k == 0) throw ConfigError("top_k requires k >= 1");
        const auto tokens = tokenize(query);
        std::vector<std::size_t> matched;
        for (const auto& token : tokens) {
            auto it = postings_.find(token);
            if (it != postings_.end()) matched.insert(matched.end(), it->second.begin(), it->second.end());
        }
        std::sort(matched.begin(), matched.end());
        matched.erase(std::unique(matched.begin(), matched.end()), matched.end());

        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(matched.size());
        for (auto position : matched) {
            const double s = score_at(tokens, position);
            if (s > 0.0) scored.emplace_back(s, position);
        }
        const auto ranked_before = [this](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return docs_[a.second].entry.id < docs_[b.second].entry.id;
        };
        const std::size_t n = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                          ranked_before);

        std::vector<Candidate> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& entry = docs_[scored[i].second].entry;
            out.push_back({i, entry.id, entry.utterance, entry.history, entry.label, scored[i].first});
        }
        return out;
    }

private:
    struct Document {
        PoolEntry entry;
        std::unordered_map<std::string, int> term_counts;
        std::size_t length = 0;
    };

    double score_at(std::span<const std::string> query, std::size_t position) const {
        const auto& doc = docs_[position];
        double total = 0.0;
        for (const auto& term : query) {
            auto it = doc.term_counts.find(term);
            if (it == doc.term_counts.end()) continue;
            const double tf = it->second;
            const double norm = 1.0 - params_.b + params_.b * static_cast<double>(doc.length) / avg_length_;
            total += idf(term) * (tf * (params_.k1 + 1.0)) / (tf + params_.k1 * norm);
        }
        return total;
    }

    std::vector<Document> docs_;
    std::unordered_map<std::string, std::vector<std::size_t>> postings_;
    std::map<DocId, std::size_t> by_id_;
    Bm25Params params_;
    double avg_length_ = 0.0;
};

inline Bm25Index build_index(std::vector<PoolEntry> pool, Bm25Params params = {}) {
    return Bm25Index::build(std::move(pool), params);
}

}  // namespace seridst
