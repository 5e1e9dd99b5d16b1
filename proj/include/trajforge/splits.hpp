// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajforge/elements.hpp"
#include "trajforge/frame.hpp"

namespace trajforge {

struct SplitConfig {
  double test_fraction = 0.2;  // in (0,1)
  std::uint64_t seed = 0;
  // Desired share of trajectories per source when subsampling. Sources with
  // no pool for a given dataset are dropped and the remaining fractions
  // renormalize.
  std::map<SourceId, double> source_balance = {
      {SourceId::MaterialsProject, 0.10},
      {SourceId::OQMD, 0.10},
      {SourceId::Alexandria, 0.80},
  };
  std::optional<std::uint64_t> target_size;  // trajectory count to subsample to
};

using ElementBits = std::bitset<kNumElements>;

// The per-trajectory metadata splits operate on; far smaller than frames.
struct TrajSummary {
  std::string trajectory_id;
  SourceId source = SourceId::MaterialsProject;
  ElementBits signature;
};

// One-hot encoding of the elements present in the trajectory's composition
// (multiplicity-blind).
ElementBits element_signature(const Trajectory& traj);
TrajSummary summarize(const Trajectory& traj);

enum class SplitLabel { train, test };

struct SplitAssignment {
  std::map<std::string, SplitLabel> labels;  // trajectory_id -> label

  std::size_t test_count() const;
};

// Element-stratified trajectory split.
//   (a) strata are exact element-signature equality classes; each stratum is
//       split as close to (1-f)/f as integer rounding allows, rounding toward
//       train (single-trajectory strata go to train);
//   (b) hard coverage constraint: every element present in test must occur in
//       at least one train trajectory — violators move to train;
//   (c) deterministic under a fixed seed; ordering comes from a seeded hash
//       of trajectory_id, never from input order;
//   (d) assignment is per trajectory, so frames can never straddle the split.
// Throws Infeasible when fewer than 2 trajectories are given or when the
// coverage constraint empties a previously non-empty test set.
SplitAssignment stratified_split(const std::vector<TrajSummary>& trajs,
                                 const SplitConfig& cfg);
SplitAssignment stratified_split(const std::vector<Trajectory>& trajs,
                                 const SplitConfig& cfg);

// Seeded subsample to cfg.target_size trajectories honoring the per-source
// balance. Quotas use largest-remainder rounding so they always total
// target_size; sources with empty pools are treated as absent and the
// remaining fractions renormalize. Returns the selected summaries sorted by
// trajectory_id. Throws ConfigInvalid when target_size is unset and
// InsufficientPool when a source's pool is smaller than its quota.
std::vector<TrajSummary> balance_sources(const std::vector<TrajSummary>& trajs,
                                         const SplitConfig& cfg);
std::vector<Trajectory> balance_sources(std::vector<Trajectory> trajs,
                                        const SplitConfig& cfg);

// Line format of the split file: {"label":"train"|"test","trajectory_id":...}
std::string split_assignment_to_jsonl(const SplitAssignment& assignment);
SplitAssignment split_assignment_from_jsonl(const std::string& content);

}  // namespace trajforge
