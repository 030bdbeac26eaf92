#pragma once

#include <stdexcept>
#include <string>

namespace tacoord {

/// Malformed input: bad case data, unknown ids, dimension mismatches.
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Domain failure: non-convergence, instability, singular systems.
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public DomainError {
public:
  ConvergenceError(const std::string& what, int iterations, double mismatch)
      : DomainError(what), iterations_(iterations), mismatch_(mismatch) {}
  int iterations() const noexcept { return iterations_; }
  double mismatch() const noexcept { return mismatch_; }

private:
  int iterations_;
  double mismatch_;
};

class InstabilityError : public DomainError {
public:
  InstabilityError(const std::string& what, double time)
      : DomainError(what), time_(time) {}
  double time() const noexcept { return time_; }

private:
  double time_;
};

}  // namespace tacoord
