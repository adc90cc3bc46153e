#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crossreg {

// Base class for all crossreg errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (non-positive window, empty input, bad factor, ...).
class ParameterError : public Error {
  public:
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Grid/dimension mismatches between operands.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed or unsupported file content. Carries the offending field in the message.
class FormatError : public Error {
  public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// OS-level I/O failures (unreadable path, short write, ...).
class IoError : public Error {
  public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Bad pipeline configuration (unknown key, missing section, conflicting inputs).
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite objective during optimization. Keeps the loss trace recorded so
// far so callers can preserve artifacts before aborting.
class NumericalError : public Error {
  public:
    NumericalError(const std::string& msg, std::vector<std::string> trace_csv_rows)
        : Error(msg), trace_rows(std::move(trace_csv_rows)) {}

    std::vector<std::string> trace_rows;
};

}  // namespace crossreg
