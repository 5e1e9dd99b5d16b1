// SPDX-License-Identifier: Apache-2.0
#include "trajforge/curate.hpp"

#include <algorithm>
#include <cmath>

#include "trajforge/errors.hpp"

namespace trajforge {

using nlohmann::json;

json FilterConfig::to_json() const {
  json doc = json::object();
  doc["energy_convergence_threshold"] = energy_convergence_threshold;
  doc["final_force_threshold"] = final_force_threshold;
  return doc;
}

FilterConfig FilterConfig::from_json(const json& doc) {
  if (!doc.is_object()) {
    throw Error(Errc::ConfigInvalid, "filter config must be an object");
  }
  FilterConfig cfg;
  if (auto it = doc.find("energy_convergence_threshold"); it != doc.end()) {
    if (!it->is_number()) {
      throw Error(Errc::ConfigInvalid, "filter.energy_convergence_threshold must be a number");
    }
    cfg.energy_convergence_threshold = it->get<double>();
  }
  if (auto it = doc.find("final_force_threshold"); it != doc.end()) {
    if (!it->is_number()) {
      throw Error(Errc::ConfigInvalid, "filter.final_force_threshold must be a number");
    }
    cfg.final_force_threshold = it->get<double>();
  }
  if (!(cfg.energy_convergence_threshold > 0.0)) {
    throw Error(Errc::ConfigInvalid, "filter.energy_convergence_threshold must be > 0");
  }
  if (!(cfg.final_force_threshold > 0.0)) {
    throw Error(Errc::ConfigInvalid, "filter.final_force_threshold must be > 0");
  }
  return cfg;
}

void FilterStats::merge(const FilterStats& other) noexcept {
  frames_in += other.frames_in;
  frames_dropped_missing_targets += other.frames_dropped_missing_targets;
  frames_dropped_schema += other.frames_dropped_schema;
  trajectories_dropped_convergence += other.trajectories_dropped_convergence;
  frames_dropped_convergence += other.frames_dropped_convergence;
  trajectories_dropped_final_force += other.trajectories_dropped_final_force;
  frames_dropped_final_force += other.frames_dropped_final_force;
  frames_out += other.frames_out;
}

json FilterStats::to_json() const {
  json doc = json::object();
  doc["frames_in"] = frames_in;
  doc["frames_dropped_missing_targets"] = frames_dropped_missing_targets;
  doc["frames_dropped_schema"] = frames_dropped_schema;
  doc["trajectories_dropped_convergence"] = trajectories_dropped_convergence;
  doc["frames_dropped_convergence"] = frames_dropped_convergence;
  doc["trajectories_dropped_final_force"] = trajectories_dropped_final_force;
  doc["frames_dropped_final_force"] = frames_dropped_final_force;
  doc["frames_out"] = frames_out;
  return doc;
}

FilterStats FilterStats::from_json(const json& doc) {
  FilterStats stats;
  auto get = [&doc](const char* key) -> std::uint64_t {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_number()) {
      throw Error(Errc::ConfigInvalid, std::string("filter stats missing field ") + key);
    }
    return it->get<std::uint64_t>();
  };
  stats.frames_in = get("frames_in");
  stats.frames_dropped_missing_targets = get("frames_dropped_missing_targets");
  stats.frames_dropped_schema = get("frames_dropped_schema");
  stats.trajectories_dropped_convergence = get("trajectories_dropped_convergence");
  stats.frames_dropped_convergence = get("frames_dropped_convergence");
  stats.trajectories_dropped_final_force = get("trajectories_dropped_final_force");
  stats.frames_dropped_final_force = get("frames_dropped_final_force");
  stats.frames_out = get("frames_out");
  return stats;
}

bool filter_convergence(const Trajectory& traj, const FilterConfig& cfg) {
  if (traj.frames.size() < 2) return true;
  const Frame& penultimate = traj.frames[traj.frames.size() - 2];
  const Frame& final = traj.frames.back();
  if (!penultimate.energy || !final.energy) {
    throw Error(Errc::MissingForces,
                "convergence filter requires energies on the last two frames of " +
                    traj.trajectory_id);
  }
  return std::abs(*penultimate.energy - *final.energy) <=
         cfg.energy_convergence_threshold;
}

bool filter_final_force(const Trajectory& traj, const FilterConfig& cfg) {
  const Frame& final = traj.final_frame();
  if (!final.forces) {
    throw Error(Errc::MissingForces,
                "final-force filter requires forces on the final frame of " +
                    traj.trajectory_id);
  }
  double max_norm = 0.0;
  for (const Vec3& f : *final.forces) {
    max_norm = std::max(max_norm, norm3(f));
  }
  return max_norm <= cfg.final_force_threshold;
}

FilterStats run_filters_stream(
    const std::function<std::optional<Trajectory>()>& source,
    const FilterConfig& cfg, const std::function<void(Trajectory&&)>& sink) {
  FilterStats stats;
  while (auto traj = source()) {
    stats.frames_in += traj->frames.size();

    // Per-frame passes first; the trajectory is then rebuilt from whatever
    // survived, so the later trajectory-level filters see the real final
    // frames of the curated sequence.
    std::vector<Frame> kept;
    kept.reserve(traj->frames.size());
    for (Frame& frame : traj->frames) {
      if (!filter_frame_completeness(frame)) {
        ++stats.frames_dropped_missing_targets;
        continue;
      }
      if (!validate_frame(frame).ok()) {
        ++stats.frames_dropped_schema;
        continue;
      }
      kept.push_back(std::move(frame));
    }
    if (kept.empty()) continue;

    Trajectory rebuilt;
    rebuilt.trajectory_id = traj->trajectory_id;
    rebuilt.composition = composition_of(kept.front());
    rebuilt.frames = std::move(kept);

    if (!filter_convergence(rebuilt, cfg)) {
      ++stats.trajectories_dropped_convergence;
      stats.frames_dropped_convergence += rebuilt.frames.size();
      continue;
    }
    if (!filter_final_force(rebuilt, cfg)) {
      ++stats.trajectories_dropped_final_force;
      stats.frames_dropped_final_force += rebuilt.frames.size();
      continue;
    }
    stats.frames_out += rebuilt.frames.size();
    sink(std::move(rebuilt));
  }
  return stats;
}

std::pair<std::vector<Trajectory>, FilterStats> run_filters(
    std::vector<Trajectory> trajs, const FilterConfig& cfg) {
  std::size_t next = 0;
  auto source = [&]() -> std::optional<Trajectory> {
    if (next >= trajs.size()) return std::nullopt;
    return std::move(trajs[next++]);
  };
  std::vector<Trajectory> kept;
  FilterStats stats = run_filters_stream(
      source, cfg, [&kept](Trajectory&& t) { kept.push_back(std::move(t)); });
  return {std::move(kept), stats};
}

std::map<Functional, std::vector<Frame>> partition_by_functional(
    std::vector<Frame> frames) {
  std::map<Functional, std::vector<Frame>> partitions;
  for (Frame& f : frames) {
    partitions[f.functional].push_back(std::move(f));
  }
  return partitions;
}

}  // namespace trajforge
