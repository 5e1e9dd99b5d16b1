// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajforge/frame.hpp"

namespace trajforge {

enum class HistScale { linear, log10 };

struct Histogram {
  std::vector<double> bin_edges;  // ascending, counts.size() + 1 entries
  std::vector<std::uint64_t> counts;
  HistScale scale = HistScale::linear;

  std::uint64_t total() const noexcept;
};

// Mean/variance curve over normalized relaxation progress in [0,1].
struct ProfileCurve {
  std::vector<double> bin_centers;
  std::vector<double> mean;    // 0 for empty bins (n == 0)
  std::vector<double> stddev;  // population std; 0 for empty bins
  std::vector<std::uint64_t> n;
};

// Streaming per-bin mean/variance accumulator (Welford), mergeable across
// workers without precision loss beyond the usual compensated-merge bounds
// (Chan's parallel update). Counts merge exactly.
class ProfileAccumulator {
 public:
  explicit ProfileAccumulator(int n_bins);

  // fraction must lie in [0,1]; the final bin is closed at 1.0.
  void add(double fraction, double value);
  void merge(const ProfileAccumulator& other);
  ProfileCurve finalize() const;

  int bins() const noexcept { return static_cast<int>(cells_.size()); }

 private:
  struct Cell {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
  };
  std::vector<Cell> cells_;
};

// Log10-spaced histogram of trajectory lengths over [1, max length]. The
// leftmost edge is included; every other bin is left-open/right-closed, which
// puts a decade boundary value (10, 100, ...) in the lower decade's bin.
Histogram trajectory_length_histogram(const std::vector<std::uint64_t>& lengths,
                                      int n_bins);

// Max over atoms of the Euclidean force norm. Throws MissingForces.
double max_force_norm(const Frame& frame);

// Per-frame energy above the trajectory's final energy, per atom, pooled into
// equal-width bins of normalized progress t/(T-1) (single-frame trajectories
// contribute one point at fraction 1.0). Requires energies on every frame.
ProfileCurve delta_e_profile(const std::vector<Trajectory>& trajs, int n_bins);
void accumulate_delta_e_profile(const Trajectory& traj, ProfileAccumulator& acc);

// Same pooling with max_force_norm as the statistic.
ProfileCurve force_profile(const std::vector<Trajectory>& trajs, int n_bins);
void accumulate_force_profile(const Trajectory& traj, ProfileAccumulator& acc);

// Number of trajectories whose composition contains each element.
std::map<std::string, std::uint64_t> element_trajectory_counts(
    const std::vector<Trajectory>& trajs);

// Frames-per-stage distributions: for each relaxation_number, a linear
// histogram of how many frames trajectories have in that stage, plus the
// number of trajectories contributing.
struct StageHistogram {
  int relaxation_number = 1;
  Histogram histogram;
  std::uint64_t n_trajectories = 0;
};
std::vector<StageHistogram> relaxation_stage_histogram(
    const std::vector<Trajectory>& trajs);

// Same histograms from pre-accumulated per-stage lists of frames-in-stage
// counts (one entry per trajectory having the stage); lets callers stream
// trajectories without holding them.
std::vector<StageHistogram> relaxation_stage_histogram_from_counts(
    const std::map<int, std::vector<std::uint64_t>>& stage_counts);

// Log10-spaced histogram over positive values (zeros land in the first bin).
Histogram log10_histogram(const std::vector<double>& values, int n_bins);

// Labeled mean of the per-frame max-force statistic. Both readings of "mean
// maximum force" are reported: averaged over every frame, and averaged over
// per-trajectory maxima.
struct ForceSummary {
  double mean_over_frames = 0.0;
  double mean_over_trajectory_maxima = 0.0;
  std::uint64_t n_frames = 0;
  std::uint64_t n_trajectories = 0;
};
ForceSummary force_summary(const std::vector<Trajectory>& trajs);

}  // namespace trajforge
