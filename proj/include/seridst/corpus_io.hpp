#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>

#include <json.hpp>

#include "seridst/corpus.hpp"
#include "seridst/normalize.hpp"

namespace seridst {

enum class CorpusFormat { multiwoz_21, jsonl_simple };

inline CorpusFormat parse_corpus_format(std::string_view tag) {
    if (tag == "multiwoz-2.1") return CorpusFormat::multiwoz_21;
    if (tag == "jsonl-simple") return CorpusFormat::jsonl_simple;
    throw ConfigError("unknown corpus format '" + std::string(tag) +
                      "' (expected multiwoz-2.1 or jsonl-simple)");
}

inline const char* to_string(CorpusFormat format) {
    return format == CorpusFormat::multiwoz_21 ? "multiwoz-2.1" : "jsonl-simple";
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error while reading " + path.string());
    return buf.str();
}

inline std::string value_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return {};
    if (v.is_array()) return v.empty() ? std::string() : value_text(v.front());
    return v.dump();
}

inline void put_normalized(BeliefState& state, const std::string& key, const nlohmann::json& raw,
                           const Canonicalizer& table, const std::string& dialogue_id, int turn) {
    auto name = SlotName::parse(key);
    if (!name) throw SchemaError("malformed slot name '" + key + "'", dialogue_id, turn);
    if (!is_known_domain(name->domain))
        throw SchemaError("slot '" + key + "' names an unknown domain", dialogue_id, turn);
    if (auto value = normalize_value(*name, value_text(raw), table))
        state.set(std::move(*name), std::move(*value));
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& dialogue_id, int turn) {
    if (!obj.is_object() || !obj.contains(key))
        throw SchemaError(std::string("missing field '") + key + "'", dialogue_id, turn);
    return obj.at(key);
}

inline Corpus load_jsonl_simple(const std::filesystem::path& path, const Canonicalizer& table) {
    const std::string content = read_file(path);
    std::istringstream in(content);
    std::vector<Dialogue> dialogues;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        Dialogue d;
        const auto& id = require(obj, "id", "line " + std::to_string(line_no), 0);
        if (!id.is_string()) throw SchemaError("dialogue id must be a string", "line " + std::to_string(line_no));
        d.id = id.get<std::string>();
        if (obj.contains("split")) d.split = obj.at("split").get<std::string>();
        const auto& turns = require(obj, "turns", d.id, 0);
        if (!turns.is_array()) throw SchemaError("'turns' must be an array", d.id);
        int index = 0;
        for (const auto& t : turns) {
            ++index;
            Turn turn;
            turn.index = t.contains("index") ? t.at("index").get<int>() : index;
            const auto& user = require(t, "user", d.id, index);
            turn.user_utterance = user.get<std::string>();
            if (t.contains("system") && !t.at("system").is_null())
                turn.system_utterance = t.at("system").get<std::string>();
            const auto& state = require(t, "state", d.id, index);
            if (!state.is_object()) throw SchemaError("'state' must be an object", d.id, index);
            for (const auto& [key, value] : state.items())
                put_normalized(turn.gold_turn_state, key, value, table, d.id, index);
            if (t.contains("accumulated")) {
                for (const auto& [key, value] : t.at("accumulated").items())
                    put_normalized(turn.gold_accumulated, key, value, table, d.id, index);
            } else {
                turn.gold_accumulated = d.turns.empty() ? BeliefState{} : d.turns.back().gold_accumulated;
                for (const auto& [name, value] : turn.gold_turn_state) turn.gold_accumulated.set(name, value);
            }
            d.turns.push_back(std::move(turn));
        }
        validate_dialogue(d);
        dialogues.push_back(std::move(d));
    }
    return Corpus(std::move(dialogues), table.version());
}

inline std::string multiwoz_slot(const std::string& key) {
    const std::string lower = text::to_lower(key);
    if (lower == "leaveat") return "leave";
    if (lower == "arriveby") return "arrive";
    return lower;
}

inline BeliefState multiwoz_state(const nlohmann::json& metadata, const Canonicalizer& table,
                                  const std::string& dialogue_id, int turn) {
    BeliefState state;
    if (!metadata.is_object()) return state;
    for (const auto& [domain, body] : metadata.items()) {
        if (!is_known_domain(domain) || !body.is_object()) continue;
        for (const char* part : {"semi", "book"}) {
            if (!body.contains(part)) continue;
            for (const auto& [key, value] : body.at(part).items()) {
                if (key == "booked" || key == "ticket") continue;
                put_normalized(state, domain + "-" + multiwoz_slot(key), value, table, dialogue_id,
                               turn);
            }
        }
    }
    return state;
}

inline std::unordered_set<std::string> read_id_list(const std::filesystem::path& path) {
    std::unordered_set<std::string> ids;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        auto id = text::trim(line);
        if (!id.empty()) ids.insert(std::string(id));
    }
    return ids;
}

inline Corpus load_multiwoz(const std::filesystem::path& path, const Canonicalizer& table) {
    std::filesystem::path data_file = path;
    std::filesystem::path dir = path.parent_path();
    if (std::filesystem::is_directory(path)) {
        dir = path;
        data_file = path / "data.json";
    }
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(read_file(data_file));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(data_file.string() + ": " + e.what());
    }
    if (!root.is_object()) throw SchemaError(data_file.string() + ": expected an object keyed by dialogue id");

    std::unordered_set<std::string> test_ids, dev_ids;
    const bool has_lists = std::filesystem::exists(dir / "testListFile.txt") ||
                           std::filesystem::exists(dir / "valListFile.txt");
    if (std::filesystem::exists(dir / "testListFile.txt")) test_ids = read_id_list(dir / "testListFile.txt");
    if (std::filesystem::exists(dir / "valListFile.txt")) dev_ids = read_id_list(dir / "valListFile.txt");

    std::vector<Dialogue> dialogues;
    dialogues.reserve(root.size());
    for (const auto& [id, body] : root.items()) {
        Dialogue d;
        d.id = id;
        if (has_lists) d.split = test_ids.count(id) ? "test" : dev_ids.count(id) ? "dev" : "train";
        const auto& log = require(body, "log", id, 0);
        if (!log.is_array() || log.empty()) throw SchemaError("'log' must be a non-empty array", id);
        BeliefState running;
        for (std::size_t i = 0; i < log.size(); i += 2) {
            const int index = static_cast<int>(i / 2) + 1;
            Turn turn;
            turn.index = index;
            turn.user_utterance = require(log[i], "text", id, index).get<std::string>();
            if (i + 1 < log.size()) {
                const auto& sys = log[i + 1];
                turn.system_utterance = require(sys, "text", id, index).get<std::string>();
                // Cumulative annotation; differenced into b_t below. Removed slots are ignored.
                const auto cumulative = multiwoz_state(require(sys, "metadata", id, index), table, id, index);
                for (const auto& [name, value] : cumulative) {
                    const SlotValue* before = running.find(name);
                    if (!before || !(*before == value)) turn.gold_turn_state.set(name, value);
                }
            }
            for (const auto& [name, value] : turn.gold_turn_state) running.set(name, value);
            turn.gold_accumulated = running;
            d.turns.push_back(std::move(turn));
        }
        validate_dialogue(d);
        dialogues.push_back(std::move(d));
    }
    return Corpus(std::move(dialogues), table.version());
}

}  // namespace detail

/// Loads and validates a corpus. Values pass through normalize_value with `table`.
inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                          const Canonicalizer& table = Canonicalizer::shared()) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    try {
        switch (format) {
            case CorpusFormat::jsonl_simple: return detail::load_jsonl_simple(path, table);
            case CorpusFormat::multiwoz_21: return detail::load_multiwoz(path, table);
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    throw ConfigError("unhandled corpus format");
}

inline Corpus load_corpus(const std::filesystem::path& path, std::string_view format,
                          const Canonicalizer& table = Canonicalizer::shared()) {
    return load_corpus(path, parse_corpus_format(format), table);
}

}  // namespace seridst
