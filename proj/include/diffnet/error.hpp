#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace diffnet {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments, malformed inputs, broken preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// An iterative solver hit its cap without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Diffusion iterates left the finite range.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t agent, std::int64_t iteration)
      : Error("iterate diverged at agent " + std::to_string(agent) +
              ", iteration " + std::to_string(iteration)),
        agent_(agent),
        iteration_(iteration) {}

  std::size_t agent() const noexcept { return agent_; }
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t agent_;
  std::int64_t iteration_;
};

}  // namespace diffnet
