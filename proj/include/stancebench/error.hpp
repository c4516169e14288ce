#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stancebench {

// Every module throws a subclass of Error carrying a module-specific kind
// enum, so callers can branch on the failure without parsing messages.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Kind>
class KindedError : public Error {
public:
    KindedError(Kind kind, const std::string& message)
        : Error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace stancebench
