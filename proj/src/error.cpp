#include "tcnacc/error.hpp"

namespace tcnacc {

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void throw_input(const std::string& message) { throw Error(ErrorKind::input, message); }
void throw_infeasible(const std::string& message) { throw Error(ErrorKind::infeasible, message); }
void throw_internal(const std::string& message) { throw Error(ErrorKind::internal, message); }

}  // namespace tcnacc
