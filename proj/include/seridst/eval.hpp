#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "seridst/corpus.hpp"
#include "seridst/dst.hpp"
#include "seridst/retriever.hpp"

namespace seridst {

/// Ignore: gold slot the model missed. Spurious: predicted slot absent from gold.
/// Wrong: slot present on both sides with different values.
enum class ErrorKind { ignore, spurious, wrong };

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ignore: return "ignore";
        case ErrorKind::spurious: return "spurious";
        case ErrorKind::wrong: return "wrong";
    }
    return "unknown";
}

inline ErrorKind parse_error_kind(std::string_view tag) {
    if (tag == "ignore") return ErrorKind::ignore;
    if (tag == "spurious") return ErrorKind::spurious;
    if (tag == "wrong") return ErrorKind::wrong;
    throw SchemaError("unknown error kind '" + std::string(tag) + "'");
}

struct SlotError {
    SlotName slot;
    ErrorKind kind = ErrorKind::ignore;
    std::optional<SlotValue> predicted;
    std::optional<SlotValue> gold;

    friend bool operator==(const SlotError&, const SlotError&) = default;
};

struct ErrorCounts {
    int ignore = 0;
    int spurious = 0;
    int wrong = 0;

    int total() const { return ignore + spurious + wrong; }
    void add(ErrorKind kind) {
        switch (kind) {
            case ErrorKind::ignore: ++ignore; break;
            case ErrorKind::spurious: ++spurious; break;
            case ErrorKind::wrong: ++wrong; break;
        }
    }
    ErrorCounts& operator+=(const ErrorCounts& o) {
        ignore += o.ignore;
        spurious += o.spurious;
        wrong += o.wrong;
        return *this;
    }
    friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

struct TurnJudgement {
    std::string dialogue_id;
    int turn_index = 0;
    bool correct = true;
    std::vector<SlotError> errors;

    ErrorCounts counts() const {
        ErrorCounts c;
        for (const auto& e : errors) c.add(e.kind);
        return c;
    }
    friend bool operator==(const TurnJudgement&, const TurnJudgement&) = default;
};

/// Compares accumulated states restricted to the target domain on both sides.
/// Two empty restrictions count as a correct turn.
inline TurnJudgement judge_turn(const BeliefState& pred_accumulated, const BeliefState& gold_accumulated,
                                std::string_view target, std::string dialogue_id = {}, int turn_index = 0) {
    const auto pred = pred_accumulated.restricted_to(target);
    const auto gold = gold_accumulated.restricted_to(target);
    TurnJudgement j;
    j.dialogue_id = std::move(dialogue_id);
    j.turn_index = turn_index;

    std::set<SlotName> slots;
    for (const auto& [name, _] : pred) slots.insert(name);
    for (const auto& [name, _] : gold) slots.insert(name);
    for (const auto& name : slots) {
        const SlotValue* p = pred.find(name);
        const SlotValue* g = gold.find(name);
        if (p && g) {
            if (!(*p == *g)) j.errors.push_back({name, ErrorKind::wrong, *p, *g});
        } else if (g) {
            j.errors.push_back({name, ErrorKind::ignore, std::nullopt, *g});
        } else {
            j.errors.push_back({name, ErrorKind::spurious, *p, std::nullopt});
        }
    }
    j.correct = j.errors.empty();
    return j;
}

inline double domain_jga(std::span<const TurnJudgement> judgements) {
    if (judgements.empty()) throw EmptyEvaluation("no judged turns");
    std::size_t correct = 0;
    for (const auto& j : judgements) correct += j.correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(judgements.size());
}

/// Running fold of one dialogue's predictions into predicted B_t per turn.
inline std::vector<std::pair<int, BeliefState>> accumulate_predictions(std::span<const Prediction> preds) {
    std::vector<std::pair<int, BeliefState>> out;
    BeliefState running;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& p = preds[i];
        if (i > 0 && (p.dialogue_id != preds[0].dialogue_id || p.turn_index != preds[i - 1].turn_index + 1))
            throw NonContiguousTurns("predictions for " + preds[0].dialogue_id + " are not contiguous at turn " +
                                     std::to_string(p.turn_index));
        for (const auto& [name, value] : p.predicted_turn_state) running.set(name, value);
        out.emplace_back(p.turn_index, running);
    }
    return out;
}

/// For every chosen example, one count per distinct domain in its label.
inline std::map<std::string, int> domain_influence(std::span<const RetrievedSet> retrieved) {
    std::map<std::string, int> histogram;
    for (const auto& set : retrieved)
        for (const auto& c : set.chosen)
            for (const auto& domain : c.label.domains()) ++histogram[domain];
    return histogram;
}

}  // namespace seridst
