#pragma once

#include <stdexcept>
#include <string>

namespace kraken {

enum class ErrorKind {
  Structural,          // shape or grid mismatch
  Configuration,       // invalid parameters, grid coverage, placement
  DataValidation,      // non-finite or inconsistent measured data
  Degenerate,          // e.g. all-zero matrix after eigen-clipping
  Numerical,           // eigensolver failure, violated invariants
  Tuning,              // sampler could not reach a usable acceptance rate
  InsufficientSamples,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace kraken
