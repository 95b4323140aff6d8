#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "seridst/belief_state.hpp"
#include "seridst/errors.hpp"

namespace seridst {

struct Turn {
    int index = 0;  // 1-based
    std::string user_utterance;
    std::string system_utterance;
    BeliefState gold_turn_state;     // b_t
    BeliefState gold_accumulated;    // B_t
};

struct Dialogue {
    std::string id;
    std::vector<Turn> turns;
    std::set<std::string> domains;
    /// "train", "dev", "test", or empty when the source carries no split.
    std::string split;

    bool has_domain(std::string_view domain) const { return domains.count(std::string(domain)) != 0; }
};

/// One turn to predict, with its single prior exchange as history.
struct TestInstance {
    std::string dialogue_id;
    int turn_index = 0;
    std::string current_user;
    std::optional<std::string> prev_user;
    std::optional<std::string> prev_system;
    BeliefState gold_turn_state;
    BeliefState gold_accumulated;

    bool has_history() const { return prev_user.has_value(); }

    /// "[user] ... [system] ..." or "None".
    std::string render_history() const {
        if (!prev_user) return "None";
        return "[user] " + *prev_user + " [system] " + *prev_system;
    }
};

/// Later turns overwrite earlier values; nothing is ever deleted.
inline BeliefState accumulate_states(std::span<const BeliefState> turn_states) {
    BeliefState out;
    for (const auto& state : turn_states)
        for (const auto& [name, value] : state) out.set(name, value);
    return out;
}

inline BeliefState accumulate_states(std::initializer_list<BeliefState> turn_states) {
    return accumulate_states(std::span<const BeliefState>(turn_states.begin(), turn_states.size()));
}

/// Checks the per-dialogue invariants and fills Dialogue::domains.
inline void validate_dialogue(Dialogue& d) {
    if (d.id.empty()) throw SchemaError("dialogue without id");
    if (d.turns.empty()) throw SchemaError("dialogue has no turns", d.id);
    BeliefState running;
    d.domains.clear();
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const auto& turn = d.turns[i];
        if (turn.index != static_cast<int>(i) + 1)
            throw SchemaError("turn indices must be contiguous from 1", d.id, turn.index);
        for (const auto& [name, value] : turn.gold_turn_state) running.set(name, value);
        if (running != turn.gold_accumulated)
            throw ValidationError("accumulated state does not match turn-level states", d.id,
                                  turn.index);
        for (const auto& domain : turn.gold_turn_state.domains()) d.domains.insert(domain);
        for (const auto& domain : turn.gold_accumulated.domains()) d.domains.insert(domain);
    }
}

class Corpus {
public:
    Corpus() = default;

    explicit Corpus(std::vector<Dialogue> dialogues, std::string normalization_version = {})
        : dialogues_(std::move(dialogues)), normalization_version_(std::move(normalization_version)) {
        std::unordered_set<std::string> seen;
        for (const auto& d : dialogues_) {
            if (!seen.insert(d.id).second) throw SchemaError("duplicate dialogue id", d.id);
            domains_.insert(d.domains.begin(), d.domains.end());
        }
    }

    const std::vector<Dialogue>& dialogues() const noexcept { return dialogues_; }
    const std::set<std::string>& domain_set() const noexcept { return domains_; }
    const std::string& normalization_table_version() const noexcept { return normalization_version_; }
    std::size_t size() const noexcept { return dialogues_.size(); }

    const Dialogue* find(std::string_view id) const {
        auto it = std::find_if(dialogues_.begin(), dialogues_.end(),
                               [&](const Dialogue& d) { return d.id == id; });
        return it == dialogues_.end() ? nullptr : &*it;
    }

    /// Dialogues satisfying pred, sharing this corpus' normalization version.
    template <typename Pred>
    Corpus filtered(Pred pred) const {
        std::vector<Dialogue> kept;
        for (const auto& d : dialogues_)
            if (pred(d)) kept.push_back(d);
        return Corpus(std::move(kept), normalization_version_);
    }

    bool has_splits() const {
        return std::any_of(dialogues_.begin(), dialogues_.end(),
                           [](const Dialogue& d) { return !d.split.empty(); });
    }

private:
    std::vector<Dialogue> dialogues_;
    std::set<std::string> domains_;
    std::string normalization_version_;
};

/// D^-target: drops every dialogue that touches the target domain at any turn.
inline Corpus exclude_domain(const Corpus& corpus, std::string_view target) {
    require_known_domain(target);
    return corpus.filtered([&](const Dialogue& d) { return !d.has_domain(target); });
}

/// Keeps one split ("all" keeps everything). A corpus without split tags is returned whole.
inline Corpus select_split(const Corpus& corpus, std::string_view split) {
    if (split == "all" || !corpus.has_splits()) return corpus;
    return corpus.filtered([&](const Dialogue& d) { return d.split == split; });
}

inline std::vector<TestInstance> build_test_instances(const Corpus& corpus, std::string_view target) {
    require_known_domain(target);
    std::vector<TestInstance> out;
    bool any_dialogue = false;
    for (const auto& d : corpus.dialogues()) {
        if (!d.has_domain(target)) continue;
        any_dialogue = true;
        for (std::size_t i = 0; i < d.turns.size(); ++i) {
            const auto& turn = d.turns[i];
            TestInstance inst;
            inst.dialogue_id = d.id;
            inst.turn_index = turn.index;
            inst.current_user = turn.user_utterance;
            if (i > 0) {
                inst.prev_user = d.turns[i - 1].user_utterance;
                inst.prev_system = d.turns[i - 1].system_utterance;
            }
            inst.gold_turn_state = turn.gold_turn_state;
            inst.gold_accumulated = turn.gold_accumulated;
            out.push_back(std::move(inst));
        }
    }
    if (!any_dialogue)
        throw EmptySelection("no dialogue contains domain '" + std::string(target) + "'");
    return out;
}

}  // namespace seridst
