#pragma once

#include <stdexcept>
#include <string>

namespace playtitle {

// Usage errors (bad input files, schema violations, bad flags) map to exit
// code 2 in the CLI; everything else is a runtime failure (exit 1).
enum class ErrorKind { usage, runtime };

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message, ErrorKind kind = ErrorKind::runtime)
        : std::runtime_error(message), code_(std::move(code)), kind_(kind) {}

    const std::string& code() const noexcept { return code_; }
    ErrorKind kind() const noexcept { return kind_; }

private:
    std::string code_;
    ErrorKind kind_;
};

class MissingField : public Error {
public:
    MissingField(const std::string& field, const std::string& where)
        : Error("MissingField", "MissingField(\"" + field + "\") at " + where, ErrorKind::usage),
          field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& message) : Error("ParseError", message, ErrorKind::usage) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message)
        : Error("InvalidArgument", message, ErrorKind::usage) {}
};

class DegenerateSplit : public Error {
public:
    explicit DegenerateSplit(const std::string& message) : Error("DegenerateSplit", message) {}
};

class EmptyVocabulary : public Error {
public:
    explicit EmptyVocabulary(const std::string& message) : Error("EmptyVocabulary", message) {}
};

// Raised when a loss or gradient stops being finite.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error("NumericError", message) {}
};

}  // namespace playtitle
