#pragma once

#include <stdexcept>
#include <string>

namespace hbjm {

/// Raised when a configuration value is missing, malformed, or out of range.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when input data violate a validation rule. Carries enough context
/// (patient id and rule) to locate the offending record.
class data_error : public std::runtime_error {
public:
    data_error(const std::string& rule, const std::string& detail)
        : std::runtime_error(rule + ": " + detail), rule_(rule) {}

    const std::string& rule() const { return rule_; }

private:
    std::string rule_;
};

/// Raised when a function is called in a way its contract forbids
/// (programming error rather than bad data).
class contract_violation : public std::logic_error {
public:
    explicit contract_violation(const std::string& what) : std::logic_error(what) {}
};

/// Raised when a serialized artifact (posterior file, manifest, CSV) cannot
/// be parsed or has an incompatible version.
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a numerical routine fails to converge or produces a
/// non-finite result where one is required.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace hbjm
