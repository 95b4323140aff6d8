#pragma once

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seridst/corpus.hpp"
#include "seridst/corpus_io.hpp"
#include "seridst/lenient.hpp"
#include "seridst/llmclient.hpp"
#include "seridst/normalize.hpp"
#include "seridst/retriever.hpp"

namespace seridst {

struct SlotDescription {
    SlotName slot;
    std::string description;
};

namespace detail {

// Keep in sync with data/slot_descriptions.txt.
inline constexpr std::string_view kBuiltinSlotDescriptions =
    "hotel-pricerange: The price range of a hotel.\n"
    "hotel-type: The type or category of a hotel\n"
    "hotel-parking: Specifies whether a hotel offers parking options.\n"
    "hotel-day: The specific day of the week for a hotel.\n"
    "hotel-stars: The star rating of a hotel, indicating the level of quality .\n"
    "hotel-stay: The duration or length of stay in a hotel.\n"
    "hotel-internet: Specifies whether a hotel provides internet access to its guests.\n"
    "train-day: The specific day of the week for a train-related query or reservation .\n"
    "train-destination: The destination for a train.\n"
    "train-departure: The departure location for a train.\n"
    "train-arrive: The desired arrival time at the destination for a train.\n"
    "train-people: The number of people or passengers for a train.\n"
    "train-leave: The desired departure time for a train journey.\n"
    "restaurant-pricerange: The price range of a restaurant.\n"
    "restaurant-day: The specific day of the week for a restaurant.\n"
    "restaurant-time: The time for a restaurant reservation.\n"
    "restaurant-area: The location of a restaurant.\n"
    "restaurant-food: The type or cuisine of food served in a restaurant .\n"
    "restaurant-people: The number of people or guests for a restaurant-related query or reservation.\n"
    "restaurant-name: The name of a restaurant.\n"
    "attraction-area: The location of a attraction.\n"
    "attraction-name: The name or specific name of an attraction.\n"
    "attraction-type: The type or category of an attraction, such as 'museum,' 'park,' 'theater,' etc.\n"
    "hotel-people: The number of people or guests for a hotel.\n"
    "hotel-area: The location of a hotel\n"
    "hotel-name: The name of a hotel.\n"
    "taxi-leave: The desired departure time for a taxi.\n"
    "taxi-destination: The intended destination for a taxi.\n"
    "taxi-departure: The departure location for a taxi.\n"
    "taxi-arrive: The desired arrival time for a taxi.\n";

}  // namespace detail

/// Parses "domain-slot: description" lines; blank lines and '#' comments are skipped.
inline std::vector<SlotDescription> parse_slot_descriptions(std::string_view content,
                                                            const std::string& origin = "<descriptions>") {
    std::vector<SlotDescription> out;
    std::istringstream in{std::string(content)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        const auto colon = trimmed.find(':');
        const auto where = origin + ":" + std::to_string(line_no);
        if (colon == std::string_view::npos) throw ConfigError(where + ": expected 'domain-slot: description'");
        auto name = SlotName::parse(text::trim(trimmed.substr(0, colon)));
        if (!name) throw ConfigError(where + ": malformed slot name");
        auto description = std::string(text::trim(trimmed.substr(colon + 1)));
        if (description.empty()) throw ConfigError(where + ": empty description for " + name->str());
        out.push_back({std::move(*name), std::move(description)});
    }
    return out;
}

inline std::vector<SlotDescription> load_slot_descriptions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read slot descriptions " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_slot_descriptions(buf.str(), path.string());
}

/// The full 30-slot description set, in prompt order.
inline const std::vector<SlotDescription>& default_slot_descriptions() {
    static const auto descriptions = parse_slot_descriptions(detail::kBuiltinSlotDescriptions, "<builtin>");
    return descriptions;
}

/// Cross-domain DST prompt: worked examples from other domains, the extended
/// slot descriptions, then the test turn with its single prior exchange.
inline std::string build_dst_prompt(const RetrievedSet& examples, const std::vector<SlotDescription>& descriptions,
                                    const TestInstance& instance, std::string_view target_domain,
                                    const PromptBudget& budget = {}) {
    require_known_domain(target_domain);
    for (const auto& slot : domain_slots(target_domain)) {
        const bool covered = std::any_of(descriptions.begin(), descriptions.end(),
                                         [&](const SlotDescription& d) { return d.slot == slot; });
        if (!covered) throw MissingDescription("no description for " + slot.str());
    }
    const std::string rule(78, '-');
    std::ostringstream out;
    out << "> This is example of dialogue state tracking, which extract useful information from user's dailgoue.\n";
    out << "> Don't guessing not mentioned information from user\n";
    out << "> example's slots are\n";
    out << ">";
    for (const auto& slot : schema_slots())
        if (slot.domain != target_domain) out << " " << slot.str();
    out << "\n\n";
    out << rule << "\n";
    for (std::size_t i = 0; i < examples.chosen.size(); ++i) {
        const auto& ex = examples.chosen[i];
        if (i) out << "\n";
        out << "# example " << (i + 1) << "\n";
        out << "dialogue:\n";
        out << "prev : " << ex.history << "\n";
        out << "curr : [user] " << ex.utterance << "\n";
        out << "label: " << ex.label.render() << "\n";
    }
    out << rule << "\n";
    out << "> End of Example. In this time, the slots are extended to " << target_domain << ".\n\n";
    out << "slots to be inference is\n\n";
    for (const auto& d : descriptions) out << d.slot.str() << ": " << d.description << "\n";
    out << "\n" << std::string(20, '-') << "\n\n";
    out << "> now make the dialogue state tracking result\n";
    out << "> The answer must be in JSON format with brace, so that it can be parsed\n";
    out << "> if there is nothing to inference, the output shuold be not_mentioned\n";
    out << "> The answer can be don'tcare\n\n";
    out << "prev : " << instance.render_history() << "\n";
    out << "curr : [user] " << instance.current_user << "\n";
    out << "label:";
    std::string prompt = out.str();
    budget.check(prompt);
    return prompt;
}

/// Counts of model-emitted slot keys outside the schema.
struct ParseDiagnostics {
    std::map<std::string, int> unknown_slots;

    int total_unknown() const {
        int n = 0;
        for (const auto& [_, count] : unknown_slots) n += count;
        return n;
    }
    void merge(const ParseDiagnostics& other) {
        for (const auto& [key, count] : other.unknown_slots) unknown_slots[key] += count;
    }
};

namespace detail {

inline std::string canonical_slot_key(std::string_view raw) {
    std::string key;
    for (char c : text::to_lower(text::trim(raw)))
        if (!text::is_space(c)) key.push_back(c);
    const auto dash = key.find('-');
    if (dash == std::string::npos) return key;
    std::string slot = key.substr(dash + 1);
    if (text::starts_with(slot, "book")) slot = slot.substr(4);
    if (!slot.empty() && (slot.front() == '_' || slot.front() == '-')) slot = slot.substr(1);
    if (slot == "leaveat") slot = "leave";
    if (slot == "arriveby") slot = "arrive";
    if (slot == "price_range") slot = "pricerange";
    return key.substr(0, dash + 1) + slot;
}

inline void add_prediction(BeliefState& state, std::string_view raw_key, const std::string& raw_value,
                           ParseDiagnostics& diagnostics) {
    const std::string key = canonical_slot_key(raw_key);
    auto name = SlotName::parse(key);
    if (!name || !is_schema_slot(*name)) {
        ++diagnostics.unknown_slots[std::string(text::trim(raw_key))];
        return;
    }
    if (auto value = normalize_value(*name, raw_value)) state.set(std::move(*name), std::move(*value));
}

inline void add_json_members(BeliefState& state, const nlohmann::json& obj, const std::string& prefix,
                             ParseDiagnostics& diagnostics) {
    for (const auto& [key, value] : obj.items()) {
        if (value.is_object() && prefix.empty()) {
            add_json_members(state, value, key + "-", diagnostics);
            continue;
        }
        add_prediction(state, prefix + key, value_text(value), diagnostics);
    }
}

/// Flat key/value scan for near-JSON such as single-quoted or unquoted objects.
inline bool scan_pairs(std::string_view body, BeliefState& state, ParseDiagnostics& diagnostics) {
    bool any = false;
    std::size_t pos = 0;
    const auto read_token = [&](std::size_t& p, bool is_value) -> std::optional<std::string> {
        p = lenient::skip_spaces(body, p);
        if (p >= body.size()) return std::nullopt;
        if (lenient::is_quote(body[p])) {
            auto q = lenient::read_quoted(body, p);
            if (!q) return std::nullopt;
            p = q->second;
            return q->first;
        }
        const std::size_t start = p;
        while (p < body.size() && body[p] != ',' && body[p] != '}' && (is_value || body[p] != ':')) ++p;
        auto token = text::trim(body.substr(start, p - start));
        if (token.empty()) return std::nullopt;
        // A bare colon is only legal inside a clock time; anything else means two pairs ran together.
        for (std::size_t i = 0; i < token.size(); ++i)
            if (token[i] == ':' && (i == 0 || i + 1 == token.size() || !std::isdigit(static_cast<unsigned char>(token[i - 1])) ||
                                    !std::isdigit(static_cast<unsigned char>(token[i + 1]))))
                return std::nullopt;
        return std::string(token);
    };
    while (pos < body.size()) {
        pos = lenient::skip_spaces(body, pos);
        if (pos < body.size() && (body[pos] == '{' || body[pos] == ',')) {
            ++pos;
            continue;
        }
        if (pos >= body.size() || body[pos] == '}') break;
        auto key = read_token(pos, false);
        if (!key) return false;
        pos = lenient::skip_spaces(body, pos);
        if (pos >= body.size() || body[pos] != ':') return false;
        ++pos;
        auto value = read_token(pos, true);
        if (!value) return false;
        add_prediction(state, *key, *value, diagnostics);
        any = true;
    }
    return any || text::trim(body).empty();
}

inline std::string strip_fences(std::string_view text) {
    std::string out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line))
        if (!text::starts_with(text::trim(line), "```")) out += line + "\n";
    return out;
}

}  // namespace detail

/// Reads the predicted turn state from a model reply.
///
/// Takes the first brace-delimited object, tolerating code fences and prose around it.
/// A bare "not_mentioned" / "none" reply is an empty state. Keys outside the schema
/// are dropped and tallied in `diagnostics`.
inline BeliefState parse_dst_response(std::string_view text, ParseDiagnostics* diagnostics = nullptr) {
    ParseDiagnostics local;
    ParseDiagnostics& diag = diagnostics ? *diagnostics : local;
    const std::string cleaned = detail::strip_fences(text);
    const auto open = cleaned.find('{');
    if (open == std::string::npos) {
        std::string bare = fold_text(cleaned);
        if (!bare.empty() && is_not_mentioned_text(bare)) return {};
        throw ParseError("no brace-delimited object in response");
    }
    const auto close = lenient::matching_close(cleaned, open);
    if (!close) throw ParseError("unbalanced braces in response");
    const std::string body = cleaned.substr(open, *close - open + 1);
    if (cleaned.find_first_of("{}", *close + 1) != std::string::npos)
        throw ParseError("stray braces after response object");

    BeliefState state;
    ParseDiagnostics attempt;
    try {
        const auto obj = nlohmann::json::parse(body);
        if (!obj.is_object()) throw ParseError("response object is not a JSON object");
        detail::add_json_members(state, obj, "", attempt);
        diag.merge(attempt);
        return state;
    } catch (const nlohmann::json::exception&) {
    }
    state = {};
    attempt = {};
    if (!detail::scan_pairs(std::string_view(body).substr(1, body.size() - 2), state, attempt))
        throw ParseError("could not read key/value pairs from response object");
    diag.merge(attempt);
    return state;
}

struct Prediction {
    std::string dialogue_id;
    int turn_index = 0;
    BeliefState predicted_turn_state;
    std::string raw_response;
    RetrievalMethod retrieved_method = RetrievalMethod::self;
    std::int64_t latency_ms = 0;
    /// Retries exhausted; predicted_turn_state is empty.
    bool failed = false;
    ParseDiagnostics diagnostics;
};

/// Prompts for one turn and parses the reply, resending on ParseError up to `retries` times.
/// Exhausted retries produce a failed Prediction rather than an exception.
inline Prediction predict_turn(const TestInstance& instance, const RetrievedSet& examples,
                               const std::vector<SlotDescription>& descriptions, std::string_view target_domain,
                               llm::Backend& backend, int retries, const llm::CompletionSettings& settings = {},
                               const PromptBudget& budget = {}) {
    if (retries < 0) throw ConfigError("retries must be non-negative");
    Prediction p;
    p.dialogue_id = instance.dialogue_id;
    p.turn_index = instance.turn_index;
    p.retrieved_method = examples.method;
    const auto request = settings.request(build_dst_prompt(examples, descriptions, instance, target_domain, budget));
    const auto start = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt <= retries; ++attempt) {
        p.raw_response = backend.complete(request).text;
        try {
            ParseDiagnostics diag;
            p.predicted_turn_state = parse_dst_response(p.raw_response, &diag);
            p.diagnostics = std::move(diag);
            p.failed = false;
            break;
        } catch (const ParseError&) {
            p.failed = true;
        }
    }
    p.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    return p;
}

}  // namespace seridst
