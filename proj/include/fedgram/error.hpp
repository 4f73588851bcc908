#pragma once

#include <stdexcept>
#include <string>

namespace fedgram {

/// Raised on contract violations (bad shapes, infeasible parameters, degenerate inputs).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool ok, const char* message) {
    if (!ok) {
        throw Error(message);
    }
}

inline void require(bool ok, const std::string& message) {
    if (!ok) {
        throw Error(message);
    }
}

}  // namespace fedgram
