#pragma once

#include <stdexcept>
#include <string>

namespace qlab {

// Base class for all recoverable laboratory errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Register/operand shape disagreements and unknown register names.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A matrix handed to apply_unitary fails the 1e-9 unitarity check.
class NonUnitaryError : public Error {
 public:
  using Error::Error;
};

// Post-selection weight below 1e-12: the requested outcome is impossible.
class ZeroWeightError : public Error {
 public:
  using Error::Error;
};

// A configured cap (total dimension, enumeration size, subsystem count) was exceeded.
class CapError : public Error {
 public:
  using Error::Error;
};

// Comp_x case 1 hit with no advice copies left (b = 0).
class AdviceExhaustedError : public Error {
 public:
  using Error::Error;
};

// build_psi_v hit a zero-weight projection at the given step.
class InconsistentTranscriptError : public Error {
 public:
  InconsistentTranscriptError(int step_in, const std::string& what)
      : Error(what), step(step_in) {}
  int step;
};

// Clone database: every subsystem under the key is already consumed.
class DatabaseExhaustedError : public Error {
 public:
  using Error::Error;
};

// Clone database: lookup key was never stored.
class UnknownKeyError : public Error {
 public:
  using Error::Error;
};

// Malformed circuit file / config file / transcript log.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Declared scheme/protocol parameters violate a transformation precondition
// (threshold outside the (s, c) window, amplification inequality, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Protocol round schedule violated (wrong sender, wrong arity, bad alphabet).
class ScheduleError : public Error {
 public:
  using Error::Error;
};

}  // namespace qlab
