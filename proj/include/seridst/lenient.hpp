#pragma once

// Hand-rolled scanners for pulling structure out of free-form model output.
// They never recurse on input size, so arbitrarily long or hostile text is safe.

#include <optional>
#include <string>
#include <string_view>

#include "seridst/text.hpp"

namespace seridst::lenient {

inline bool is_quote(char c) { return c == '"' || c == '\''; }

inline std::size_t skip_spaces(std::string_view s, std::size_t pos) {
    while (pos < s.size() && text::is_space(s[pos])) ++pos;
    return pos;
}

inline bool is_word_char(char c) { return text::is_alnum(c) || c == '_'; }

/// Position just past `key` followed by an optional closing quote, spaces and ':' or '='.
/// Matches case-insensitively and only at word boundaries; a trailing plural 's' is
/// accepted when allow_plural is set.
inline std::optional<std::size_t> find_key(std::string_view s, std::string_view key,
                                           std::size_t from = 0, bool allow_plural = false) {
    const std::string lower = text::to_lower(s);
    for (std::size_t pos = lower.find(key, from); pos != std::string::npos; pos = lower.find(key, pos + 1)) {
        if (pos > 0 && is_word_char(lower[pos - 1])) continue;
        std::size_t end = pos + key.size();
        if (allow_plural && end < lower.size() && lower[end] == 's') ++end;
        if (end < lower.size() && is_word_char(lower[end])) continue;
        if (end < lower.size() && is_quote(lower[end])) ++end;
        end = skip_spaces(lower, end);
        if (end < lower.size() && (lower[end] == ':' || lower[end] == '=')) return skip_spaces(lower, end + 1);
    }
    return std::nullopt;
}

/// Reads a quoted string starting at s[pos] (which must be a quote). Handles
/// backslash escapes. Returns the decoded text and the index past the closing quote.
/// A single-quoted string may contain apostrophes when they sit between letters.
inline std::optional<std::pair<std::string, std::size_t>> read_quoted(std::string_view s, std::size_t pos) {
    if (pos >= s.size() || !is_quote(s[pos])) return std::nullopt;
    const char quote = s[pos];
    std::string out;
    for (std::size_t i = pos + 1; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '\\' && i + 1 < s.size()) {
            const char next = s[++i];
            switch (next) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                default: out.push_back(next); break;
            }
            continue;
        }
        if (c == quote) {
            const bool inner_apostrophe = quote == '\'' && i > pos + 1 && text::is_alnum(s[i - 1]) &&
                                          i + 1 < s.size() && text::is_alnum(s[i + 1]);
            if (!inner_apostrophe) return std::make_pair(std::move(out), i + 1);
        }
        out.push_back(c);
    }
    return std::nullopt;
}

/// Index of the bracket closing the one at s[open_pos], skipping quoted text.
inline std::optional<std::size_t> matching_close(std::string_view s, std::size_t open_pos) {
    const char open = s[open_pos];
    const char close = open == '[' ? ']' : open == '{' ? '}' : ')';
    int depth = 0;
    for (std::size_t i = open_pos; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '"') {
            auto q = read_quoted(s, i);
            if (!q) return std::nullopt;
            i = q->second - 1;
            continue;
        }
        if (c == open) ++depth;
        if (c == close && --depth == 0) return i;
    }
    return std::nullopt;
}

}  // namespace seridst::lenient
