#pragma once

#include <stdexcept>
#include <string>

namespace seridst {

/// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Errors tied to a location inside a corpus file.
class CorpusError : public Error {
public:
    CorpusError(const std::string& what, std::string dialogue_id = {}, int turn_index = 0)
        : Error(format(what, dialogue_id, turn_index)),
          dialogue_id_(std::move(dialogue_id)),
          turn_index_(turn_index) {}

    const std::string& dialogue_id() const noexcept { return dialogue_id_; }
    int turn_index() const noexcept { return turn_index_; }

private:
    static std::string format(const std::string& what, const std::string& id, int turn) {
        if (id.empty()) return what;
        std::string out = what + " (dialogue " + id;
        if (turn > 0) out += ", turn " + std::to_string(turn);
        return out + ")";
    }

    std::string dialogue_id_;
    int turn_index_;
};

class IoError : public CorpusError {
public:
    using CorpusError::CorpusError;
};

class SchemaError : public CorpusError {
public:
    using CorpusError::CorpusError;
};

class ValidationError : public CorpusError {
public:
    using CorpusError::CorpusError;
};

class UnknownDomain : public Error {
public:
    explicit UnknownDomain(const std::string& domain)
        : Error("unknown domain: '" + domain + "'") {}
};

class EmptySelection : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UnknownDocument : public Error {
public:
    using Error::Error;
};

class PromptTooLong : public Error {
public:
    PromptTooLong(std::size_t tokens, std::size_t budget)
        : Error("prompt needs ~" + std::to_string(tokens) + " tokens, budget is " +
                std::to_string(budget)),
          tokens_(tokens),
          budget_(budget) {}

    std::size_t tokens() const noexcept { return tokens_; }
    std::size_t budget() const noexcept { return budget_; }

private:
    std::size_t tokens_;
    std::size_t budget_;
};

/// Model output could not be interpreted. Retryable.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Model returned an index outside the candidate list. Retryable.
class IndexOutOfRange : public ParseError {
public:
    IndexOutOfRange(long long index, std::size_t n_candidates)
        : ParseError("index " + std::to_string(index) + " outside [0, " +
                     std::to_string(n_candidates) + ")"),
          index_(index) {}

    long long index() const noexcept { return index_; }

private:
    long long index_;
};

class RetrievalFailed : public Error {
public:
    RetrievalFailed(const std::string& what, std::string last_response)
        : Error(what), last_response_(std::move(last_response)) {}

    const std::string& last_response() const noexcept { return last_response_; }

private:
    std::string last_response_;
};

class NotEnoughCandidates : public Error {
public:
    using Error::Error;
};

class MissingDescription : public Error {
public:
    using Error::Error;
};

enum class BackendErrorKind { transient, auth, connectivity, protocol, cache_miss, usage };

inline const char* to_string(BackendErrorKind kind) {
    switch (kind) {
        case BackendErrorKind::transient: return "transient";
        case BackendErrorKind::auth: return "auth";
        case BackendErrorKind::connectivity: return "connectivity";
        case BackendErrorKind::protocol: return "protocol";
        case BackendErrorKind::cache_miss: return "cache_miss";
        case BackendErrorKind::usage: return "usage";
    }
    return "unknown";
}

class BackendError : public Error {
public:
    BackendError(BackendErrorKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    BackendErrorKind kind() const noexcept { return kind_; }

private:
    BackendErrorKind kind_;
};

/// A scripted mock has no answer for the request: a harness bug, not a model failure.
class MockMiss : public Error {
public:
    using Error::Error;
};

class EmptyEvaluation : public Error {
public:
    using Error::Error;
};

class NonContiguousTurns : public Error {
public:
    using Error::Error;
};

class UnsupportedFormat : public Error {
public:
    using Error::Error;
};

class MissingArtifacts : public Error {
public:
    using Error::Error;
};

}  // namespace seridst
