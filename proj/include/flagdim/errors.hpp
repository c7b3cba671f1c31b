#pragma once

#include <stdexcept>
#include <string>

namespace flagdim {

// Bad user input: malformed measure files, out-of-range parameters,
// mismatched dimensions.  The CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerically degenerate state: ill-conditioned splittings, general-position
// failures, undefined angles.  Usually retryable with a longer horizon or a
// different seed.  The CLI maps this to exit code 3.
class degeneracy_error : public std::runtime_error {
public:
  explicit degeneracy_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A result that contradicts a structural guarantee (e.g. no monotone path
// found even though one must exist).  Never expected to fire.
class internal_error : public std::logic_error {
public:
  explicit internal_error(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace flagdim
