// SPDX-License-Identifier: Apache-2.0
#include "trajforge/types.hpp"

#include <unordered_map>

#include "trajforge/errors.hpp"

namespace trajforge {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::CompositionMismatch:
      return "CompositionMismatch";
    case Errc::DuplicateKey:
      return "DuplicateKey";
    case Errc::LocationUnreadable:
      return "LocationUnreadable";
    case Errc::CorruptCheckpoint:
      return "CorruptCheckpoint";
    case Errc::IoFailure:
      return "IoFailure";
    case Errc::UnknownFunctional:
      return "UnknownFunctional";
    case Errc::MissingTargets:
      return "MissingTargets";
    case Errc::ParseFailure:
      return "ParseFailure";
    case Errc::DuplicateConflict:
      return "DuplicateConflict";
    case Errc::CountMismatch:
      return "CountMismatch";
    case Errc::Infeasible:
      return "Infeasible";
    case Errc::InsufficientPool:
      return "InsufficientPool";
    case Errc::MissingForces:
      return "MissingForces";
    case Errc::MissingReference:
      return "MissingReference";
    case Errc::DimensionMismatch:
      return "DimensionMismatch";
    case Errc::NumericalOverflow:
      return "NumericalOverflow";
    case Errc::StageFailure:
      return "StageFailure";
    case Errc::ConfigInvalid:
      return "ConfigInvalid";
  }
  return "Error";
}

std::string_view to_string(Functional f) noexcept {
  switch (f) {
    case Functional::PBE:
      return "PBE";
    case Functional::PBESol:
      return "PBESol";
    case Functional::SCAN:
      return "SCAN";
    case Functional::r2SCAN:
      return "r2SCAN";
  }
  return "PBE";
}

std::string_view source_tag(SourceId s) noexcept {
  switch (s) {
    case SourceId::MaterialsProject:
      return "mp";
    case SourceId::Alexandria:
      return "alexandria";
    case SourceId::OQMD:
      return "oqmd";
  }
  return "mp";
}

std::optional<Functional> functional_from_string(std::string_view s) noexcept {
  for (Functional f : kAllFunctionals) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

std::optional<SourceId> source_from_tag(std::string_view s) noexcept {
  for (SourceId src : kAllSources) {
    if (source_tag(src) == s) return src;
  }
  return std::nullopt;
}

std::optional<Functional> functional_from_alias(std::string_view raw) noexcept {
  static const std::unordered_map<std::string_view, Functional> kAliases = {
      {"PBE", Functional::PBE},       {"GGA", Functional::PBE},
      {"PBESol", Functional::PBESol}, {"PBEsol", Functional::PBESol},
      {"PBESOL", Functional::PBESol}, {"GGA+U", Functional::PBE},
      {"SCAN", Functional::SCAN},     {"r2SCAN", Functional::r2SCAN},
      {"R2SCAN", Functional::r2SCAN},
  };
  auto it = kAliases.find(raw);
  if (it == kAliases.end()) return std::nullopt;
  return it->second;
}

}  // namespace trajforge
