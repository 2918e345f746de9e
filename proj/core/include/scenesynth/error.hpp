#pragma once

#include <stdexcept>
#include <string>

namespace scenesynth {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An error carrying a module-specific code so callers can branch on the
/// failure kind without string matching.
template <typename Code>
class CodedError : public Error {
 public:
  CodedError(Code code, const std::string& what) : Error(what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace scenesynth
