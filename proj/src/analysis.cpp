// SPDX-License-Identifier: Apache-2.0
#include "trajforge/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "trajforge/errors.hpp"

namespace trajforge {

std::uint64_t Histogram::total() const noexcept {
  std::uint64_t sum = 0;
  for (std::uint64_t c : counts) sum += c;
  return sum;
}

ProfileAccumulator::ProfileAccumulator(int n_bins) {
  if (n_bins < 1) {
    throw Error(Errc::ConfigInvalid, "profile needs at least one bin");
  }
  cells_.resize(static_cast<std::size_t>(n_bins));
}

void ProfileAccumulator::add(double fraction, double value) {
  const int n_bins = bins();
  int bin = static_cast<int>(std::floor(fraction * n_bins));
  if (bin < 0) bin = 0;
  if (bin >= n_bins) bin = n_bins - 1;  // fraction == 1.0 closes the last bin
  Cell& c = cells_[static_cast<std::size_t>(bin)];
  c.n += 1;
  double delta = value - c.mean;
  c.mean += delta / static_cast<double>(c.n);
  c.m2 += delta * (value - c.mean);
}

void ProfileAccumulator::merge(const ProfileAccumulator& other) {
  if (other.bins() != bins()) {
    throw Error(Errc::DimensionMismatch, "profile accumulator bin counts differ");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    Cell& a = cells_[i];
    const Cell& b = other.cells_[i];
    if (b.n == 0) continue;
    if (a.n == 0) {
      a = b;
      continue;
    }
    // Chan's parallel combination: exact for counts, numerically stable for
    // the moments.
    double delta = b.mean - a.mean;
    std::uint64_t n = a.n + b.n;
    double nb_over_n = static_cast<double>(b.n) / static_cast<double>(n);
    a.m2 += b.m2 + delta * delta * static_cast<double>(a.n) * nb_over_n;
    a.mean += delta * nb_over_n;
    a.n = n;
  }
}

ProfileCurve ProfileAccumulator::finalize() const {
  ProfileCurve curve;
  const int n_bins = bins();
  curve.bin_centers.reserve(cells_.size());
  for (int i = 0; i < n_bins; ++i) {
    curve.bin_centers.push_back((static_cast<double>(i) + 0.5) / n_bins);
  }
  for (const Cell& c : cells_) {
    curve.n.push_back(c.n);
    curve.mean.push_back(c.n == 0 ? 0.0 : c.mean);
    curve.stddev.push_back(c.n == 0 ? 0.0
                                    : std::sqrt(c.m2 / static_cast<double>(c.n)));
  }
  return curve;
}

Histogram trajectory_length_histogram(const std::vector<std::uint64_t>& lengths,
                                      int n_bins) {
  if (n_bins < 1) {
    throw Error(Errc::ConfigInvalid, "histogram needs at least one bin");
  }
  Histogram hist;
  hist.scale = HistScale::log10;
  hist.counts.assign(static_cast<std::size_t>(n_bins), 0);
  if (lengths.empty()) {
    // Degenerate but well-formed edges over [1, 1].
    for (int i = 0; i <= n_bins; ++i) hist.bin_edges.push_back(1.0);
    return hist;
  }
  const double max_len =
      static_cast<double>(*std::max_element(lengths.begin(), lengths.end()));
  const double log_max = std::log10(std::max(max_len, 1.0));
  for (int i = 0; i <= n_bins; ++i) {
    hist.bin_edges.push_back(std::pow(10.0, log_max * i / n_bins));
  }
  for (std::uint64_t len : lengths) {
    double v = static_cast<double>(len);
    // Leftmost edge inclusive, then (edge[i], edge[i+1]] bins: a value equal
    // to an interior edge counts in the lower bin.
    int bin = 0;
    while (bin < n_bins - 1 && v > hist.bin_edges[static_cast<std::size_t>(bin) + 1]) {
      ++bin;
    }
    hist.counts[static_cast<std::size_t>(bin)] += 1;
  }
  return hist;
}

double max_force_norm(const Frame& frame) {
  if (!frame.forces) {
    throw Error(Errc::MissingForces, "frame " + frame.frame_id + " has no forces");
  }
  double max_norm = 0.0;
  for (const Vec3& f : *frame.forces) {
    max_norm = std::max(max_norm, norm3(f));
  }
  return max_norm;
}

namespace {

double progress_fraction(std::size_t t, std::size_t T) {
  if (T <= 1) return 1.0;  // an equilibrium-only trajectory is all "final"
  return static_cast<double>(t) / static_cast<double>(T - 1);
}

}  // namespace

void accumulate_delta_e_profile(const Trajectory& traj, ProfileAccumulator& acc) {
  const std::size_t T = traj.frames.size();
  if (T == 0) return;
  const Frame& last = traj.frames.back();
  if (!last.energy) {
    throw Error(Errc::MissingForces,
                "delta-E profile requires energies on " + traj.trajectory_id);
  }
  const double e_final = *last.energy;
  for (std::size_t t = 0; t < T; ++t) {
    const Frame& frame = traj.frames[t];
    if (!frame.energy) {
      throw Error(Errc::MissingForces,
                  "delta-E profile requires energies on " + traj.trajectory_id);
    }
    const double natoms = static_cast<double>(frame.species.size());
    const double delta_per_atom = (*frame.energy - e_final) / natoms;
    acc.add(progress_fraction(t, T), delta_per_atom);
  }
}

ProfileCurve delta_e_profile(const std::vector<Trajectory>& trajs, int n_bins) {
  ProfileAccumulator acc(n_bins);
  for (const Trajectory& t : trajs) accumulate_delta_e_profile(t, acc);
  return acc.finalize();
}

void accumulate_force_profile(const Trajectory& traj, ProfileAccumulator& acc) {
  const std::size_t T = traj.frames.size();
  for (std::size_t t = 0; t < T; ++t) {
    acc.add(progress_fraction(t, T), max_force_norm(traj.frames[t]));
  }
}

ProfileCurve force_profile(const std::vector<Trajectory>& trajs, int n_bins) {
  ProfileAccumulator acc(n_bins);
  for (const Trajectory& t : trajs) accumulate_force_profile(t, acc);
  return acc.finalize();
}

std::map<std::string, std::uint64_t> element_trajectory_counts(
    const std::vector<Trajectory>& trajs) {
  std::map<std::string, std::uint64_t> counts;
  for (const Trajectory& t : trajs) {
    for (const auto& [symbol, count] : t.composition) {
      (void)count;
      counts[symbol] += 1;
    }
  }
  return counts;
}

std::vector<StageHistogram> relaxation_stage_histogram(
    const std::vector<Trajectory>& trajs) {
  // stage -> list of frames-in-stage counts, one entry per trajectory that
  // has the stage.
  std::map<int, std::vector<std::uint64_t>> stage_counts;
  for (const Trajectory& t : trajs) {
    std::map<int, std::uint64_t> per_stage;
    for (const Frame& f : t.frames) per_stage[f.relaxation_number] += 1;
    for (const auto& [stage, count] : per_stage) {
      stage_counts[stage].push_back(count);
    }
  }
  return relaxation_stage_histogram_from_counts(stage_counts);
}

std::vector<StageHistogram> relaxation_stage_histogram_from_counts(
    const std::map<int, std::vector<std::uint64_t>>& stage_counts) {
  std::vector<StageHistogram> out;
  for (const auto& [stage, counts] : stage_counts) {
    StageHistogram sh;
    sh.relaxation_number = stage;
    sh.n_trajectories = counts.size();
    const std::uint64_t max_count = *std::max_element(counts.begin(), counts.end());
    Histogram hist;
    hist.scale = HistScale::linear;
    // Unit-width integer bins [k, k+1) over 1..max; exact for step counts.
    for (std::uint64_t k = 1; k <= max_count + 1; ++k) {
      hist.bin_edges.push_back(static_cast<double>(k));
    }
    hist.counts.assign(max_count, 0);
    for (std::uint64_t c : counts) hist.counts[c - 1] += 1;
    sh.histogram = std::move(hist);
    out.push_back(std::move(sh));
  }
  return out;
}

Histogram log10_histogram(const std::vector<double>& values, int n_bins) {
  if (n_bins < 1) {
    throw Error(Errc::ConfigInvalid, "histogram needs at least one bin");
  }
  Histogram hist;
  hist.scale = HistScale::log10;
  hist.counts.assign(static_cast<std::size_t>(n_bins), 0);
  double min_pos = 0.0, max_val = 0.0;
  for (double v : values) {
    if (v > 0.0 && (min_pos == 0.0 || v < min_pos)) min_pos = v;
    max_val = std::max(max_val, v);
  }
  if (values.empty() || max_val <= 0.0) {
    for (int i = 0; i <= n_bins; ++i) hist.bin_edges.push_back(1.0);
    hist.counts.assign(static_cast<std::size_t>(n_bins), 0);
    if (!values.empty()) hist.counts[0] = values.size();  // all zeros
    return hist;
  }
  if (min_pos == max_val) min_pos = max_val / 10.0;
  const double lo = std::log10(min_pos);
  const double hi = std::log10(max_val);
  for (int i = 0; i <= n_bins; ++i) {
    hist.bin_edges.push_back(std::pow(10.0, lo + (hi - lo) * i / n_bins));
  }
  for (double v : values) {
    int bin = 0;
    if (v > hist.bin_edges.front()) {
      while (bin < n_bins - 1 && v > hist.bin_edges[static_cast<std::size_t>(bin) + 1]) {
        ++bin;
      }
    }
    hist.counts[static_cast<std::size_t>(bin)] += 1;
  }
  return hist;
}

ForceSummary force_summary(const std::vector<Trajectory>& trajs) {
  ForceSummary s;
  double frame_sum = 0.0, traj_sum = 0.0;
  for (const Trajectory& t : trajs) {
    double traj_max = 0.0;
    for (const Frame& f : t.frames) {
      double m = max_force_norm(f);
      frame_sum += m;
      traj_max = std::max(traj_max, m);
      s.n_frames += 1;
    }
    traj_sum += traj_max;
    s.n_trajectories += 1;
  }
  if (s.n_frames > 0) s.mean_over_frames = frame_sum / static_cast<double>(s.n_frames);
  if (s.n_trajectories > 0) {
    s.mean_over_trajectory_maxima = traj_sum / static_cast<double>(s.n_trajectories);
  }
  return s;
}

}  // namespace trajforge
