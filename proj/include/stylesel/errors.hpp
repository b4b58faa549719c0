#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stylesel {

// Bad input data, bad configuration, or a violated precondition.
// The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Network failure while talking to a remote backend. CLI exit code 1.
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem write failure (journal, reports). CLI exit code 1.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The backend answered but no valid dictionary index could be recovered.
// Carries the raw backend output for the audit trail.
class ResponseParseError : public std::runtime_error {
public:
    ResponseParseError(const std::string& what, std::string raw_response)
        : std::runtime_error(what), raw_(std::move(raw_response)) {}

    const std::string& raw_response() const { return raw_; }

private:
    std::string raw_;
};

// Every retry attempt failed. CLI exit code 1.
struct SelectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace stylesel
