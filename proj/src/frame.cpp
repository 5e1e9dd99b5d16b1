// SPDX-License-Identifier: Apache-2.0
#include "trajforge/frame.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "trajforge/elements.hpp"
#include "trajforge/errors.hpp"

namespace trajforge {

namespace {

bool all_finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

bool all_finite(const Mat3& m) {
  return all_finite(m[0]) && all_finite(m[1]) && all_finite(m[2]);
}

}  // namespace

ValidationReport validate_frame(const Frame& frame) {
  ValidationReport report;
  report.frame_id = frame.frame_id;
  auto violate = [&report](const char* rule, std::string msg) {
    report.violations.push_back({rule, std::move(msg)});
  };

  if (frame.species.empty()) {
    violate("SPECIES_EMPTY", "frame has no atoms");
  }
  for (std::size_t i = 0; i < frame.species.size(); ++i) {
    if (!is_known_element(frame.species[i])) {
      violate("UNKNOWN_ELEMENT",
              "species[" + std::to_string(i) + "] = \"" + frame.species[i] +
                  "\" is not a chemical element");
    }
  }
  if (frame.positions.size() != frame.species.size()) {
    violate("POSITION_SHAPE",
            "positions has " + std::to_string(frame.positions.size()) +
                " rows for " + std::to_string(frame.species.size()) + " atoms");
  }
  if (frame.forces && frame.forces->size() != frame.species.size()) {
    violate("FORCE_SHAPE",
            "forces has " + std::to_string(frame.forces->size()) +
                " rows for " + std::to_string(frame.species.size()) + " atoms");
  }

  bool finite = all_finite(frame.lattice);
  for (const Vec3& p : frame.positions) {
    finite = finite && all_finite(p);
  }
  if (frame.energy && !std::isfinite(*frame.energy)) finite = false;
  if (frame.forces) {
    for (const Vec3& f : *frame.forces) finite = finite && all_finite(f);
  }
  if (frame.stress && !all_finite(*frame.stress)) finite = false;
  if (!finite) {
    violate("NON_FINITE", "frame contains NaN or infinite numeric values");
  }

  // A NaN lattice also fails here; both findings are reported since the
  // report enumerates every violated invariant.
  if (!(det3(frame.lattice) > 0.0)) {
    violate("CELL_VOLUME", "lattice determinant is not strictly positive");
  }
  if (frame.relaxation_step < 0) {
    violate("NEGATIVE_STEP", "relaxation_step = " +
                                 std::to_string(frame.relaxation_step));
  }
  if (frame.relaxation_number < 1) {
    violate("BAD_RELAXATION_NUMBER",
            "relaxation_number = " + std::to_string(frame.relaxation_number));
  }
  return report;
}

std::map<std::string, int> composition_of(const Frame& frame) {
  std::map<std::string, int> comp;
  for (const std::string& s : frame.species) ++comp[s];
  return comp;
}

std::string canonical_frame_id(SourceId source, std::string_view record_id,
                               int relaxation_number, int relaxation_step) {
  std::string id(source_tag(source));
  id += ':';
  id += record_id;
  id += ':';
  id += std::to_string(relaxation_number);
  id += ':';
  id += std::to_string(relaxation_step);
  return id;
}

std::string canonical_trajectory_id(SourceId source, std::string_view record_id) {
  std::string id(source_tag(source));
  id += ':';
  id += record_id;
  return id;
}

std::vector<Trajectory> assemble_trajectories(std::vector<Frame> frames) {
  // std::map keeps trajectory output sorted by id without a second pass.
  std::map<std::string, std::vector<Frame>> groups;
  for (Frame& f : frames) {
    groups[f.trajectory_id].push_back(std::move(f));
  }
  frames.clear();

  std::vector<Trajectory> out;
  out.reserve(groups.size());
  for (auto& [id, group] : groups) {
    std::sort(group.begin(), group.end(), [](const Frame& a, const Frame& b) {
      if (a.relaxation_number != b.relaxation_number)
        return a.relaxation_number < b.relaxation_number;
      return a.relaxation_step < b.relaxation_step;
    });
    for (std::size_t i = 1; i < group.size(); ++i) {
      const Frame& prev = group[i - 1];
      const Frame& cur = group[i];
      if (prev.relaxation_number == cur.relaxation_number &&
          prev.relaxation_step == cur.relaxation_step) {
        throw Error(Errc::DuplicateKey,
                    "duplicate frame key " + cur.frame_id + " in trajectory " + id);
      }
    }

    Trajectory traj;
    traj.trajectory_id = id;
    traj.composition = composition_of(group.front());
    for (const Frame& f : group) {
      if (composition_of(f) != traj.composition) {
        throw Error(Errc::CompositionMismatch,
                    "composition varies within trajectory " + id + " at " + f.frame_id);
      }
      if (f.functional != group.front().functional || f.source != group.front().source) {
        throw Error(Errc::CompositionMismatch,
                    "functional/source varies within trajectory " + id + " at " + f.frame_id);
      }
    }
    traj.frames = std::move(group);
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace trajforge
