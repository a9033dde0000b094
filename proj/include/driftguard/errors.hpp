#pragma once

#include <stdexcept>
#include <string>

namespace driftguard {

// Broken preconditions or malformed in-memory inputs.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input files that do not match the expected schema.
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O failures and format-version mismatches on artifact files.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric that is undefined for the given inputs (never silently zero).
struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// Too little data to run an operation; detectors abstain on this.
struct InsufficientDataError : std::runtime_error {
    explicit InsufficientDataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace driftguard
