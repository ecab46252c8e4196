#pragma once

#include <stdexcept>
#include <string>

namespace avgeo {

/// Bad argument or malformed data handed to a library call.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Geometric singularity, e.g. the log map of an antipodal pair.
class SingularityError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Non-finite values produced while integrating a flow.
class IntegrationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace avgeo
