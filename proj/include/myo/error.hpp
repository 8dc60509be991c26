#pragma once

#include <stdexcept>
#include <string>

#include "myo/movement.hpp"

namespace myo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StreamFormatError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class RegularizationRequired : public Error {
public:
    using Error::Error;
};

class DegenerateAxis : public Error {
public:
    explicit DegenerateAxis(Movement m)
        : Error("degenerate axis for movement '" + std::string(movement_name(m)) +
                "': centroid coincides with Rest"),
          movement_(m) {}
    Movement movement() const { return movement_; }

private:
    Movement movement_;
};

class ProtocolStateError : public Error {
public:
    using Error::Error;
};

class BudgetExhausted : public ProtocolStateError {
public:
    using ProtocolStateError::ProtocolStateError;
};

// Malformed input file. what() reads "<file>:<line>: <message>".
class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& message)
        : Error(file + ":" + std::to_string(line) + ": " + message), file_(file), line_(line) {}
    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

}  // namespace myo
