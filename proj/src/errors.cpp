#include "modlock/errors.hpp"

namespace modlock {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config-error";
    case ErrorKind::InvalidModel: return "invalid-model";
    case ErrorKind::NoConvergence: return "no-convergence";
    case ErrorKind::DegenerateOrbit: return "degenerate-orbit";
    case ErrorKind::InvalidOrbit: return "invalid-orbit";
    case ErrorKind::BracketFailure: return "bracket-failure";
    case ErrorKind::AssumptionViolation: return "assumption-violation";
    case ErrorKind::Nondegeneracy: return "nondegeneracy-violation";
    case ErrorKind::RegimeViolation: return "regime-violation";
    case ErrorKind::LeftNeighborhood: return "left-neighborhood";
    case ErrorKind::IntegrationFailure: return "integration-failure";
    case ErrorKind::InvalidField: return "invalid-field";
    case ErrorKind::InvalidState: return "invalid-state";
    case ErrorKind::ContractViolation: return "contract-violation";
    case ErrorKind::DomainViolation: return "domain-violation";
    case ErrorKind::BoundUnavailable: return "bound-unavailable";
    case ErrorKind::Io: return "io-error";
  }
  return "unknown-error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidModel:
      return 2;
    case ErrorKind::NoConvergence:
    case ErrorKind::DegenerateOrbit:
    case ErrorKind::InvalidOrbit:
    case ErrorKind::BracketFailure:
      return 3;
    case ErrorKind::AssumptionViolation:
    case ErrorKind::Nondegeneracy:
    case ErrorKind::RegimeViolation:
    case ErrorKind::LeftNeighborhood:
      return 4;
    case ErrorKind::IntegrationFailure:
    case ErrorKind::InvalidField:
    case ErrorKind::InvalidState:
      return 5;
    case ErrorKind::ContractViolation:
    case ErrorKind::DomainViolation:
    case ErrorKind::BoundUnavailable:
      return 6;
    case ErrorKind::Io:
      return 7;
  }
  return 1;
}

}  // namespace modlock
