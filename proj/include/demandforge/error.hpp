#pragma once

#include <stdexcept>
#include <string>

namespace demandforge {

// All engine failures carry a short machine-readable code ("dangling_node",
// "infeasible", ...) next to the human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& message) : Error("infeasible", message) {}
};

class TimeoutError : public Error {
public:
    explicit TimeoutError(const std::string& message) : Error("timeout", message) {}
};

}  // namespace demandforge
