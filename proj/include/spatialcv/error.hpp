#pragma once

#include <stdexcept>
#include <string>

namespace spatialcv {

/// Broad failure category. The CLI maps each kind to a fixed exit status.
enum class ErrorKind {
    config,      // bad arguments, manifests, expressions
    data,        // unreadable or invalid input files
    degenerate,  // model or partition cannot be built from the data
    infeasible,  // a search or design has no solution
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct ExpressionError : Error {
    explicit ExpressionError(const std::string& w) : Error(ErrorKind::config, w) {}
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct OutOfBoundsError : Error {
    explicit OutOfBoundsError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct ExtractionError : Error {
    explicit ExtractionError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::data, w) {}
};

struct DegenerateError : Error {
    explicit DegenerateError(const std::string& w) : Error(ErrorKind::degenerate, w) {}
};
struct FeatureMismatchError : Error {
    explicit FeatureMismatchError(const std::string& w) : Error(ErrorKind::degenerate, w) {}
};
struct UndefinedMetricError : Error {
    explicit UndefinedMetricError(const std::string& w) : Error(ErrorKind::degenerate, w) {}
};

struct InfeasibleError : Error {
    explicit InfeasibleError(const std::string& w) : Error(ErrorKind::infeasible, w) {}
};
struct SelectionFailure : Error {
    explicit SelectionFailure(const std::string& w) : Error(ErrorKind::infeasible, w) {}
};

inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::degenerate: return 4;
        case ErrorKind::infeasible: return 5;
    }
    return 1;
}

}  // namespace spatialcv
