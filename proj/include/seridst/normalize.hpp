#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "seridst/belief_state.hpp"
#include "seridst/errors.hpp"
#include "seridst/text.hpp"

namespace seridst {

/// Environment variable naming a canonicalization table that replaces the built-in one.
inline constexpr const char* kCanonTableEnv = "SERIDST_CANON_TABLE";

namespace detail {

// Keep in sync with data/canonical_values.tsv.
inline constexpr std::string_view kBuiltinCanonTable =
    "# version\tmwoz-canon-1\n"
    "center\tcentre\n"
    "city centre\tcentre\n"
    "town centre\tcentre\n"
    "guest house\tguesthouse\n"
    "guest houses\tguesthouse\n"
    "guesthouses\tguesthouse\n"
    "hotels\thotel\n"
    "theater\ttheatre\n"
    "theaters\ttheatre\n"
    "concert hall\tconcerthall\n"
    "night club\tnightclub\n"
    "nightclubs\tnightclub\n"
    "swimming pool\tswimmingpool\n"
    "swimming pools\tswimmingpool\n"
    "pool\tswimmingpool\n"
    "museums\tmuseum\n"
    "colleges\tcollege\n"
    "parks\tpark\n"
    "boating\tboat\n"
    "moderately priced\tmoderate\n"
    "moderately\tmoderate\n"
    "mid priced\tmoderate\n"
    "inexpensive\tcheap\n"
    "free\tyes\n"
    "portugese\tportuguese\n"
    "do n't care\tdontcare\n"
    "dont care\tdontcare\n"
    "any\tdontcare\n"
    "doesn't matter\tdontcare\n";

}  // namespace detail

/// Folds case, collapses whitespace and strips punctuation from both ends.
inline std::string fold_text(std::string_view raw) {
    std::string s = text::collapse_whitespace(text::to_lower(raw));
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && (text::is_punct(s[begin]) || text::is_space(s[begin]))) ++begin;
    while (end > begin && (text::is_punct(s[end - 1]) || text::is_space(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

/// Whole-value variant -> canonical mapping loaded from a tab-separated table.
///
/// A table line is `variant<TAB>canonical`; blank lines and lines starting with
/// '#' are ignored except `# version<TAB>tag`, which sets version(). Every key is
/// folded on load. Canonical values must already be folded and must not themselves
/// be variants of something else, so normalization is idempotent.
class Canonicalizer {
public:
    static Canonicalizer from_string(std::string_view table, std::string origin = "<builtin>") {
        Canonicalizer c;
        std::istringstream in{std::string(table)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (text::trim(line).empty()) continue;
            if (line.front() == '#') {
                auto fields = text::split(line, '\t');
                if (fields.size() == 2 && text::trim(fields[0]) == "# version")
                    c.version_ = std::string(text::trim(fields[1]));
                continue;
            }
            auto fields = text::split(line, '\t');
            if (fields.size() != 2)
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": expected variant<TAB>canonical");
            auto variant = fold_text(fields[0]);
            auto canonical = fold_text(fields[1]);
            if (variant.empty() || canonical.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty entry");
            if (canonical != text::collapse_whitespace(text::to_lower(fields[1])))
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": canonical value '" + fields[1] + "' is not normalized");
            c.table_[variant] = canonical;
        }
        for (const auto& [variant, canonical] : c.table_) {
            auto it = c.table_.find(canonical);
            if (it != c.table_.end() && it->second != canonical)
                throw ConfigError(origin + ": canonical '" + canonical + "' is itself mapped to '" +
                                  it->second + "'");
        }
        return c;
    }

    static Canonicalizer from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read canonicalization table " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_string(buf.str(), path.string());
    }

    static Canonicalizer builtin() { return from_string(detail::kBuiltinCanonTable); }

    /// The table named by $SERIDST_CANON_TABLE, else the built-in one.
    static Canonicalizer from_environment() {
        if (const char* path = std::getenv(kCanonTableEnv); path && *path) return from_file(path);
        return builtin();
    }

    /// Process-wide default, resolved once.
    static const Canonicalizer& shared() {
        static const Canonicalizer instance = from_environment();
        return instance;
    }

    const std::string& version() const noexcept { return version_; }
    std::size_t size() const noexcept { return table_.size(); }

    std::string canonical(const std::string& folded) const {
        auto it = table_.find(folded);
        return it == table_.end() ? folded : it->second;
    }

private:
    std::unordered_map<std::string, std::string> table_;
    std::string version_ = "unversioned";
};

inline bool is_not_mentioned_text(std::string_view folded) {
    return folded.empty() || folded == "none" || folded == "not_mentioned" ||
           folded == "not mentioned";
}

inline bool is_dont_care_text(std::string_view folded) {
    return folded == "dontcare" || folded == "don'tcare" || folded == "don't care";
}

/// Normalizes a raw slot value. std::nullopt means "not mentioned".
///
/// The slot is accepted for signature stability; the table is currently slot-independent.
inline std::optional<SlotValue> normalize_value(const SlotName& /*slot*/, std::string_view raw,
                                                const Canonicalizer& table = Canonicalizer::shared()) {
    const std::string folded = fold_text(raw);
    if (is_not_mentioned_text(folded)) return std::nullopt;
    if (is_dont_care_text(folded)) return SlotValue::dont_care();
    std::string canonical = table.canonical(folded);
    if (is_dont_care_text(canonical)) return SlotValue::dont_care();
    if (is_not_mentioned_text(canonical)) return std::nullopt;
    return SlotValue::concrete(std::move(canonical));
}

}  // namespace seridst
