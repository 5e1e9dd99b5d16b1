// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace trajforge {

// Failure categories surfaced by the library. Each carries a human-readable
// message; the category is what callers dispatch on (e.g. the transform layer
// turns ParseFailure/UnknownFunctional/MissingTargets into reject-sink rows
// instead of aborting the run).
enum class Errc {
  CompositionMismatch,
  DuplicateKey,
  LocationUnreadable,
  CorruptCheckpoint,
  IoFailure,
  UnknownFunctional,
  MissingTargets,
  ParseFailure,
  DuplicateConflict,
  CountMismatch,
  Infeasible,
  InsufficientPool,
  MissingForces,
  MissingReference,
  DimensionMismatch,
  NumericalOverflow,
  StageFailure,
  ConfigInvalid,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace trajforge
