#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wipp {

/// Machine-readable failure categories. The CLI maps these to exit codes.
enum class ErrorKind {
    InvalidArgument,
    Range,
    Parse,
    EmptyDataset,
    DuplicateObservation,
    EmbeddingNotPD,
    Factorization,
    NonFiniteField,
    MaxIterations,
    LevelCap,
    RejectionRate,
    Io,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Range: return "range";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::EmptyDataset: return "empty_dataset";
    case ErrorKind::DuplicateObservation: return "duplicate_observation";
    case ErrorKind::EmbeddingNotPD: return "embedding_not_pd";
    case ErrorKind::Factorization: return "factorization";
    case ErrorKind::NonFiniteField: return "non_finite_field";
    case ErrorKind::MaxIterations: return "max_iterations";
    case ErrorKind::LevelCap: return "level_cap";
    case ErrorKind::RejectionRate: return "rejection_rate";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, const std::string& what)
{
    if (!condition) fail(kind, what);
}

} // namespace wipp
