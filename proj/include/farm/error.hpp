#pragma once

#include <stdexcept>
#include <string>

namespace farm {

// Failure categories map onto CLI exit codes: config 2, data 3, numerical 4.
enum class ErrorKind { config, data, numerical, usage };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

// Precondition violations by library callers (bad sizes, out-of-range counts).
struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

int exit_code(ErrorKind kind) noexcept;

}  // namespace farm
