// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/frame.hpp"
#include "trajforge/ingest.hpp"

namespace trajforge {

// Renames canonical raw-record field names to whatever a particular dump
// version uses. Unlisted fields keep their canonical names, so the identity
// map is just an empty table. New dump layouts need a config change, not a
// code change.
class FieldMap {
 public:
  FieldMap() = default;
  explicit FieldMap(std::map<std::string, std::string> renames)
      : renames_(std::move(renames)) {}

  // Returns by value: the no-rename branch would otherwise hand back a
  // reference into a caller temporary.
  std::string resolve(const std::string& canonical) const {
    auto it = renames_.find(canonical);
    return it == renames_.end() ? canonical : it->second;
  }

  static FieldMap from_json(const nlohmann::json& doc);  // ConfigInvalid
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> renames_;
};

struct SourceFieldMaps {
  FieldMap mp, alexandria, oqmd;

  // Parses {"mp": {...}, "alexandria": {...}, "oqmd": {...}}, all keys
  // optional.
  static SourceFieldMaps from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;  // always emits all three keys
};

// A record the transformer refused, with enough context to find it in the
// raw dump again. payload_excerpt is ASCII-sanitized and capped at 256 bytes.
struct RejectRecord {
  SourceId source = SourceId::MaterialsProject;
  std::uint64_t file_index = 0;
  std::uint64_t line_index = 0;
  std::string reason;
  std::string payload_excerpt;
};

nlohmann::json reject_to_json(const RejectRecord& reject);

// --- Typed raw records (minimal projections of the upstream dumps) ---------

struct RawStructure {
  Mat3 lattice{};
  std::vector<std::string> species;
  std::vector<Vec3> positions;
};

struct MpIonicStep {
  RawStructure structure;
  std::optional<double> energy;
  std::optional<std::vector<Vec3>> forces;
  std::optional<Mat3> stress;
};

struct MpRawTask {
  std::string task_id;
  bool deprecated = false;
  std::string functional;
  std::vector<MpIonicStep> ionic_steps;  // ordered as computed
};

struct AlexStep {
  RawStructure structure;
  std::optional<double> energy;
  std::optional<std::vector<Vec3>> forces;
};

struct AlexRawEntry {
  std::string entry_id;
  std::string functional;
  std::vector<AlexStep> steps;  // non-empty
};

// One OQMD calculation: an input and an output structure with per-side
// targets. A side whose targets are absent or malformed is unusable; the
// calculation then contributes nothing (no values are ever fabricated).
struct OqmdCalculation {
  std::string label;  // "coarse relaxation" | "relaxation" | "fine relaxation"
  RawStructure input_structure;
  RawStructure output_structure;
  std::optional<double> energy_input, energy_output;
  std::optional<std::vector<Vec3>> forces_input, forces_output;
};

struct OqmdRawEntry {
  std::string entry_id;
  std::vector<OqmdCalculation> calculations;
};

// --- Parsing (throw ParseFailure on malformed payloads) --------------------

MpRawTask parse_mp_task(const nlohmann::json& doc, const FieldMap& fields = {});
AlexRawEntry parse_alexandria_entry(const nlohmann::json& doc,
                                    const FieldMap& fields = {});
OqmdRawEntry parse_oqmd_entry(const nlohmann::json& doc,
                              const FieldMap& fields = {});

// --- Transformers -----------------------------------------------------------

// Deprecated tasks yield []. Otherwise one frame per ionic step with
// relaxation_number 1 and the functional mapped through the closed alias
// table. Throws UnknownFunctional for labels outside the table.
std::vector<Frame> transform_mp(const MpRawTask& raw);

// Entries containing Yb anywhere yield [] (exact symbol match, so Y+B
// compounds survive). Otherwise one frame per step with relaxation_number 1.
std::vector<Frame> transform_alexandria(const AlexRawEntry& raw);

// Stages map to relaxation_number (coarse relaxation→1, relaxation→2,
// fine relaxation→3; absent stages are skipped without renumbering); each
// usable calculation contributes its input structure as relaxation_step 0 and
// its output structure as step 1. A calculation with missing targets
// contributes nothing while the rest of the entry is still processed.
// Functional is PBE (the only one OQMD provides).
std::vector<Frame> transform_oqmd(const OqmdRawEntry& raw);

// --- Dispatch ----------------------------------------------------------------

struct TransformResult {
  std::vector<Frame> frames;
  std::optional<RejectRecord> reject;
};

// Parses raw.payload and routes it to the transformer for raw.source. Any
// rejection (unparseable payload, unknown functional) is reported as a
// RejectRecord carrying the record's (file_index, line_index); it never
// throws for bad data, so one poisoned record cannot abort a run.
TransformResult dispatch(const RawRecord& raw,
                         const SourceFieldMaps& fields = {});

}  // namespace trajforge
