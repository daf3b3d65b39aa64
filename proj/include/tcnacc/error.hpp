#pragma once

#include <stdexcept>
#include <string>

namespace tcnacc {

enum class ErrorKind { input, infeasible, internal };

// Single exception type for the library; the kind maps onto CLI exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void throw_input(const std::string& message);
[[noreturn]] void throw_infeasible(const std::string& message);
[[noreturn]] void throw_internal(const std::string& message);

}  // namespace tcnacc
