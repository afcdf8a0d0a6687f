#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sepsis_hmm {

// Hazard scale exp(-beta'c) left the representable range.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Some P_k = lambda_k * exp(-beta'c) fell outside (0, 1]. MH kernels treat
// this as a reject signal; everywhere else it is a hard error.
class InfeasibleParameters : public std::domain_error {
 public:
  InfeasibleParameters(int state_index, double persistence, const std::string& context = {})
      : std::domain_error(context + "infeasible transition parameters: P_" +
                          std::to_string(state_index + 1) + " = " +
                          std::to_string(persistence) + " not in (0, 1]"),
        state_index_(state_index),
        persistence_(persistence) {}

  // 0-based transient index (0 = S1).
  int state_index() const noexcept { return state_index_; }
  double persistence() const noexcept { return persistence_; }

 private:
  int state_index_;
  double persistence_;
};

// Infeasibility tied to one patient of a cohort.
class InfeasiblePatient : public InfeasibleParameters {
 public:
  InfeasiblePatient(std::size_t patient, const InfeasibleParameters& cause)
      : InfeasibleParameters(cause.state_index(), cause.persistence(),
                             "patient " + std::to_string(patient) + ": "),
        patient_(patient) {}

  std::size_t patient() const noexcept { return patient_; }

 private:
  std::size_t patient_;
};

// Malformed or inconsistent input files.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Parameters or configuration that break a type invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A latent path reached a configuration with zero probability for every
// candidate state. Only corrupted chain state can trigger this.
class ImpossiblePathError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sepsis_hmm
