// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/frame.hpp"

namespace trajforge {

// Curation thresholds. Comparisons are inclusive: a value exactly at the
// threshold is kept.
struct FilterConfig {
  double energy_convergence_threshold = 0.02;  // eV, |E_{T-1} - E_T|
  double final_force_threshold = 0.2;          // eV/Å, max atom force norm

  nlohmann::json to_json() const;
  static FilterConfig from_json(const nlohmann::json& doc);  // ConfigInvalid
};

// Bookkeeping for one filter pass. Trajectory-level drops count all frames of
// the dropped trajectory, so frames_in - (all dropped frames) == frames_out
// always holds (see conserved()).
struct FilterStats {
  std::uint64_t frames_in = 0;
  std::uint64_t frames_dropped_missing_targets = 0;
  std::uint64_t frames_dropped_schema = 0;
  std::uint64_t trajectories_dropped_convergence = 0;
  std::uint64_t frames_dropped_convergence = 0;
  std::uint64_t trajectories_dropped_final_force = 0;
  std::uint64_t frames_dropped_final_force = 0;
  std::uint64_t frames_out = 0;

  bool conserved() const noexcept {
    return frames_out == frames_in - frames_dropped_missing_targets -
                             frames_dropped_schema - frames_dropped_convergence -
                             frames_dropped_final_force;
  }

  void merge(const FilterStats& other) noexcept;

  nlohmann::json to_json() const;
  static FilterStats from_json(const nlohmann::json& doc);
};

// Frame completeness: an optimization snapshot is usable only if both targets
// were reported.
inline bool filter_frame_completeness(const Frame& frame) noexcept {
  return frame.energy.has_value() && frame.forces.has_value();
}

// Convergence: |E_penultimate - E_final| must not exceed the threshold.
// Single-frame trajectories pass vacuously (no penultimate step exists).
bool filter_convergence(const Trajectory& traj, const FilterConfig& cfg);

// Final-structure relaxation: max per-atom force norm of the final frame must
// not exceed the threshold.
bool filter_final_force(const Trajectory& traj, const FilterConfig& cfg);

// Full curation pass over a trajectory stream. Order of application:
// per-frame completeness, per-frame schema validation, trajectory reassembly
// over the surviving frames, convergence filter, final-force filter.
// `source` yields trajectories until nullopt; kept trajectories go to `sink`.
FilterStats run_filters_stream(
    const std::function<std::optional<Trajectory>()>& source,
    const FilterConfig& cfg, const std::function<void(Trajectory&&)>& sink);

// Convenience in-memory form of run_filters_stream.
std::pair<std::vector<Trajectory>, FilterStats> run_filters(
    std::vector<Trajectory> trajs, const FilterConfig& cfg);

// Splits a frame stream by functional. Exhaustive and exclusive: every input
// frame lands in exactly one partition.
std::map<Functional, std::vector<Frame>> partition_by_functional(
    std::vector<Frame> frames);

}  // namespace trajforge
