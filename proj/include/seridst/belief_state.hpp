#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seridst/errors.hpp"

namespace seridst {

/// The five MultiWOZ domains used for cross-domain evaluation.
inline constexpr std::array<std::string_view, 5> kKnownDomains = {
    "attraction", "hotel", "restaurant", "taxi", "train"};

inline bool is_known_domain(std::string_view domain) {
    return std::find(kKnownDomains.begin(), kKnownDomains.end(), domain) != kKnownDomains.end();
}

inline void require_known_domain(std::string_view domain) {
    if (!is_known_domain(domain)) throw UnknownDomain(std::string(domain));
}

/// "domain-slot", e.g. taxi-leave.
struct SlotName {
    std::string domain;
    std::string slot;

    std::string str() const { return domain + "-" + slot; }

    /// Splits at the first hyphen. Both halves must be non-empty [a-z0-9_] tokens.
    static std::optional<SlotName> parse(std::string_view text) {
        const auto dash = text.find('-');
        if (dash == std::string_view::npos) return std::nullopt;
        SlotName name{std::string(text.substr(0, dash)), std::string(text.substr(dash + 1))};
        if (!valid_token(name.domain) || !valid_token(name.slot)) return std::nullopt;
        return name;
    }

    static SlotName from(std::string_view text) {
        auto name = parse(text);
        if (!name) throw SchemaError("malformed slot name '" + std::string(text) + "'");
        return *name;
    }

    friend auto operator<=>(const SlotName&, const SlotName&) = default;
    friend bool operator==(const SlotName&, const SlotName&) = default;

private:
    static bool valid_token(std::string_view token) {
        if (token.empty()) return false;
        return std::all_of(token.begin(), token.end(), [](char c) {
            return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        });
    }
};

/// Slots of the MultiWOZ 2.1 schema restricted to the five evaluation domains.
inline const std::vector<SlotName>& schema_slots() {
    static const std::vector<SlotName> slots = [] {
        const std::pair<std::string_view, std::vector<std::string_view>> table[] = {
            {"attraction", {"area", "name", "type"}},
            {"hotel",
             {"area", "day", "internet", "name", "parking", "people", "pricerange", "stars",
              "stay", "type"}},
            {"restaurant", {"area", "day", "food", "name", "people", "pricerange", "time"}},
            {"taxi", {"arrive", "departure", "destination", "leave"}},
            {"train", {"arrive", "day", "departure", "destination", "leave", "people"}},
        };
        std::vector<SlotName> out;
        for (const auto& [domain, names] : table)
            for (auto s : names) out.push_back({std::string(domain), std::string(s)});
        return out;
    }();
    return slots;
}

inline bool is_schema_slot(const SlotName& name) {
    const auto& slots = schema_slots();
    return std::binary_search(slots.begin(), slots.end(), name);
}

/// Schema slots of one domain in name order.
inline std::vector<SlotName> domain_slots(std::string_view domain) {
    std::vector<SlotName> out;
    for (const auto& s : schema_slots())
        if (s.domain == domain) out.push_back(s);
    return out;
}

/// A concrete value or "dontcare". "Not mentioned" is never a value: it is the slot's absence.
class SlotValue {
public:
    static SlotValue concrete(std::string text) {
        if (text.empty()) throw SchemaError("concrete slot value must be non-empty");
        return SlotValue(std::move(text), false);
    }
    static SlotValue dont_care() { return SlotValue({}, true); }

    bool is_dont_care() const noexcept { return dont_care_; }
    /// Concrete text; empty for dontcare.
    const std::string& text() const noexcept { return text_; }
    std::string render() const { return dont_care_ ? std::string("dontcare") : text_; }

    friend bool operator==(const SlotValue&, const SlotValue&) = default;

private:
    SlotValue(std::string text, bool dont_care) : text_(std::move(text)), dont_care_(dont_care) {}

    std::string text_;
    bool dont_care_ = false;
};

class BeliefState {
public:
    using Map = std::map<SlotName, SlotValue>;
    using const_iterator = Map::const_iterator;

    BeliefState() = default;
    BeliefState(std::initializer_list<std::pair<const SlotName, SlotValue>> init) : entries_(init) {}

    /// Inserts or overwrites.
    void set(SlotName name, SlotValue value) { entries_.insert_or_assign(std::move(name), std::move(value)); }

    const SlotValue* find(const SlotName& name) const {
        auto it = entries_.find(name);
        return it == entries_.end() ? nullptr : &it->second;
    }
    bool contains(const SlotName& name) const { return entries_.count(name) != 0; }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const_iterator begin() const noexcept { return entries_.begin(); }
    const_iterator end() const noexcept { return entries_.end(); }

    std::set<std::string> domains() const {
        std::set<std::string> out;
        for (const auto& [name, _] : entries_) out.insert(name.domain);
        return out;
    }

    bool has_domain(std::string_view domain) const {
        return std::any_of(entries_.begin(), entries_.end(),
                           [&](const auto& e) { return e.first.domain == domain; });
    }

    BeliefState restricted_to(std::string_view domain) const {
        BeliefState out;
        for (const auto& [name, value] : entries_)
            if (name.domain == domain) out.entries_.emplace(name, value);
        return out;
    }

    /// "train-day : thursday, train-leave : 14:45", or "None" when empty.
    std::string render() const {
        if (entries_.empty()) return "None";
        std::string out;
        for (const auto& [name, value] : entries_) {
            if (!out.empty()) out += ", ";
            out += name.str() + " : " + value.render();
        }
        return out;
    }

    friend bool operator==(const BeliefState&, const BeliefState&) = default;

private:
    Map entries_;
};

}  // namespace seridst
