#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace modlock {

// Every failure raised by the library carries one of these kinds. The CLI
// maps each kind to exactly one process exit code (see exit_code()).
enum class ErrorKind {
  Config,               // parse error, schema violation, out-of-domain parameter
  InvalidModel,         // model family parameters outside their domain
  NoConvergence,        // Newton/shooting did not converge, transient settled
  DegenerateOrbit,      // singular shooting matrix, equilibrium instead of cycle
  InvalidOrbit,         // cycle leaves r > 0
  BracketFailure,       // locking-boundary bisection endpoints not separated
  AssumptionViolation,  // hyperbolicity, simple trivial multiplier
  Nondegeneracy,        // a singular point of G with |G''| below tolerance
  RegimeViolation,      // parameters outside the averaging regime
  LeftNeighborhood,     // trajectory left the projection neighborhood of the cycle
  IntegrationFailure,   // step-size underflow, step budget exhausted
  InvalidField,         // non-finite right-hand side
  InvalidState,         // non-finite state handed to a model evaluation
  ContractViolation,    // caller broke a precondition
  DomainViolation,      // argument outside the mathematical domain (e.g. r <= 0)
  BoundUnavailable,     // transit-time bound has an empty margin
  Io,                   // output file could not be written
};

std::string_view to_string(ErrorKind kind);

// Process exit code for an error kind:
//   2 config/model/usage, 3 no-convergence (orbit or bracket), 4 assumption
//   violation, 5 integration failure, 6 contract/domain violation, 7 I/O.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class IntegrationError : public Error {
 public:
  IntegrationError(ErrorKind kind, const std::string& message, double last_time)
      : Error(kind, message), last_time_(last_time) {}

  // Last time the integrator reached before failing.
  double last_time() const noexcept { return last_time_; }

 private:
  double last_time_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::ContractViolation, message);
}

}  // namespace modlock
