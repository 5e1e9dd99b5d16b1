// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace trajforge {

// Principal component analysis of descriptor vectors.
//
// The fit is a mean-centered eigendecomposition of the population covariance
// matrix (divide by n, not n-1): points {(1,0),(-1,0)} have variance 1 along
// the first axis. Components are returned in descending explained-variance
// order, and each component's sign is fixed so its largest-magnitude entry is
// positive (first such entry on magnitude ties), which makes the model a pure
// function of the input multiset.
//
// When the data has fewer than the requested number of numerically non-zero
// eigenvalues, the model is truncated to the achievable rank and
// rank_deficient is set instead of failing.
struct PcaModel {
  std::vector<double> mean;                        // length d
  std::vector<std::vector<double>> components;     // k rows of length d
  std::vector<double> explained_variance;          // k values, descending
  bool rank_deficient = false;
  int requested_components = 0;
  std::uint64_t n_samples = 0;

  std::size_t dimension() const noexcept { return mean.size(); }
  std::size_t n_components() const noexcept { return components.size(); }
};

nlohmann::json pca_model_to_json(const PcaModel& model);
PcaModel pca_model_from_json(const nlohmann::json& doc);  // ParseFailure

// Bounded-memory covariance accumulator: pass 1 streams rows to build the
// mean, pass 2 streams the same rows to build the centered second moments.
// Holds O(d^2) state regardless of sample count.
class PcaAccumulator {
 public:
  explicit PcaAccumulator(std::size_t dim);  // ConfigInvalid when dim == 0

  void add_mean_pass(const std::vector<double>& row);   // DimensionMismatch
  void finish_mean_pass();
  void add_covariance_pass(const std::vector<double>& row);

  // Eigendecomposition of the accumulated covariance. Both passes must have
  // seen the same number of rows, at least one.
  PcaModel finish(int n_components);

  std::size_t dimension() const noexcept { return dim_; }
  std::uint64_t count() const noexcept { return n_mean_; }

 private:
  std::size_t dim_;
  std::uint64_t n_mean_ = 0;
  std::uint64_t n_cov_ = 0;
  bool mean_done_ = false;
  Eigen::VectorXd sum_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd second_moment_;  // sum of centered outer products
};

struct PcaFit {
  PcaModel model;
  std::vector<std::vector<double>> scores;  // fit-time projections, row per sample
};

// Fits on in-memory rows (two streaming passes internally).
// Errors: ConfigInvalid (n_components < 1), Infeasible (no rows),
// DimensionMismatch (ragged rows or zero-dimensional data).
PcaFit fit_pca(const std::vector<std::vector<double>>& rows, int n_components);

// (x - mean) . components^T. Errors: DimensionMismatch.
std::vector<double> pca_project(const PcaModel& model, const std::vector<double>& x);

}  // namespace trajforge
