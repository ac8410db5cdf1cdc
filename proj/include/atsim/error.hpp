#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace atsim {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a result meeting its contract
/// (singular system, step-size collapse, degenerate fit direction).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the process-wide warning sink and returns the previous one.
/// The default sink writes to stderr. Passing an empty function silences warnings.
WarningSink set_warning_sink(WarningSink sink);

void warn(std::string_view message);

}  // namespace atsim
