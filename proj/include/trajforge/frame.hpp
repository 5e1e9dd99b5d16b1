// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajforge/types.hpp"

namespace trajforge {

// One snapshot of a geometry-optimization trajectory: a periodic structure
// plus whatever targets the upstream database recorded for it. energy is in
// eV (extensive), forces in eV/Å (one row per atom), stress in eV/Å^3.
// Targets are optional because upstream records genuinely omit them; absent
// means absent, never zero-filled.
struct Frame {
  std::string frame_id;       // "<source>:<record>:<relaxation_number>:<relaxation_step>"
  std::string trajectory_id;  // "<source>:<record>"
  SourceId source = SourceId::MaterialsProject;
  std::string source_record_id;
  Functional functional = Functional::PBE;
  int relaxation_number = 1;  // 1-based stage of a multi-stage relaxation
  int relaxation_step = 0;    // 0-based step within the stage
  Mat3 lattice{};             // rows are lattice vectors, Å
  std::vector<std::string> species;
  std::vector<Vec3> positions;  // Cartesian, Å
  std::optional<double> energy;
  std::optional<std::vector<Vec3>> forces;
  std::optional<Mat3> stress;
};

struct Violation {
  std::string rule_id;
  std::string message;
};

// Outcome of schema validation; lists every violated invariant, not just the
// first one found.
struct ValidationReport {
  std::string frame_id;
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

// Structural invariants checked (rule ids):
//   SPECIES_EMPTY          at least one atom
//   UNKNOWN_ELEMENT        species symbols must be real elements
//   POSITION_SHAPE         positions row count == atom count
//   FORCE_SHAPE            forces row count == atom count (when present)
//   NON_FINITE             all numerics finite (lattice/positions/targets)
//   CELL_VOLUME            lattice determinant strictly positive
//   NEGATIVE_STEP          relaxation_step >= 0
//   BAD_RELAXATION_NUMBER  relaxation_number >= 1
ValidationReport validate_frame(const Frame& frame);

// Frames of one record ordered by (relaxation_number, relaxation_step).
struct Trajectory {
  std::string trajectory_id;
  std::vector<Frame> frames;
  std::map<std::string, int> composition;  // element -> count

  const Frame& final_frame() const { return frames.back(); }
  std::size_t size() const noexcept { return frames.size(); }
};

std::map<std::string, int> composition_of(const Frame& frame);

// Groups frames by trajectory_id and orders each group numerically by
// (relaxation_number, relaxation_step). Output trajectories are sorted by
// trajectory_id. Throws:
//   DuplicateKey         two frames share (trajectory_id, number, step)
//   CompositionMismatch  frames of one trajectory disagree on composition,
//                        functional, or source
std::vector<Trajectory> assemble_trajectories(std::vector<Frame> frames);

std::string canonical_frame_id(SourceId source, std::string_view record_id,
                               int relaxation_number, int relaxation_step);
std::string canonical_trajectory_id(SourceId source, std::string_view record_id);

}  // namespace trajforge
