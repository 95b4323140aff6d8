#pragma once

#include <json.hpp>

#include "seridst/belief_state.hpp"
#include "seridst/similarity.hpp"

namespace seridst {

inline nlohmann::json value_to_json(const SlotValue& v) { return v.render(); }

/// Inverse of value_to_json. Values were normalized before being written, so
/// "dontcare" can only mean DontCare.
inline SlotValue value_from_json(const nlohmann::json& j) {
    const auto s = j.get<std::string>();
    return s == "dontcare" ? SlotValue::dont_care() : SlotValue::concrete(s);
}

inline nlohmann::json state_to_json(const BeliefState& state) {
    nlohmann::json obj = nlohmann::json::object();
    for (const auto& [name, value] : state) obj[name.str()] = value_to_json(value);
    return obj;
}

inline BeliefState state_from_json(const nlohmann::json& j) {
    BeliefState state;
    for (const auto& [key, value] : j.items()) state.set(SlotName::from(key), value_from_json(value));
    return state;
}

inline nlohmann::json candidate_to_json(const Candidate& c) {
    return {{"index", c.index},
            {"dialogue_id", c.doc_id.dialogue_id},
            {"turn_index", c.doc_id.turn_index},
            {"utterance", c.utterance},
            {"history", c.history},
            {"label", state_to_json(c.label)},
            {"score", c.score}};
}

inline Candidate candidate_from_json(const nlohmann::json& j) {
    Candidate c;
    c.index = j.at("index").get<std::size_t>();
    c.doc_id = {j.at("dialogue_id").get<std::string>(), j.at("turn_index").get<int>()};
    c.utterance = j.at("utterance").get<std::string>();
    c.history = j.value("history", std::string("None"));
    c.label = state_from_json(j.at("label"));
    c.score = j.value("score", 0.0);
    return c;
}

}  // namespace seridst
