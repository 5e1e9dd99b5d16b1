// SPDX-License-Identifier: Apache-2.0
#include "trajforge/pca.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Eigenvalues>

#include "trajforge/errors.hpp"

namespace trajforge {

namespace {

void require_row_dim(const std::vector<double>& row, std::size_t dim) {
  if (row.size() != dim) {
    throw Error(Errc::DimensionMismatch,
                "pca: row has dimension " + std::to_string(row.size()) +
                    ", expected " + std::to_string(dim));
  }
}

}  // namespace

nlohmann::json pca_model_to_json(const PcaModel& model) {
  nlohmann::json doc;
  doc["mean"] = model.mean;
  doc["components"] = model.components;
  doc["explained_variance"] = model.explained_variance;
  doc["rank_deficient"] = model.rank_deficient;
  doc["requested_components"] = model.requested_components;
  doc["n_samples"] = model.n_samples;
  return doc;
}

PcaModel pca_model_from_json(const nlohmann::json& doc) try {
  PcaModel model;
  model.mean = doc.at("mean").get<std::vector<double>>();
  model.components = doc.at("components").get<std::vector<std::vector<double>>>();
  model.explained_variance = doc.at("explained_variance").get<std::vector<double>>();
  model.rank_deficient = doc.at("rank_deficient").get<bool>();
  model.requested_components = doc.at("requested_components").get<int>();
  model.n_samples = doc.at("n_samples").get<std::uint64_t>();
  if (model.components.size() != model.explained_variance.size()) {
    throw Error(Errc::ParseFailure,
                "pca model: component/variance count disagreement");
  }
  for (const auto& row : model.components) {
    if (row.size() != model.mean.size()) {
      throw Error(Errc::ParseFailure, "pca model: ragged component matrix");
    }
  }
  return model;
} catch (const nlohmann::json::exception& e) {
  throw Error(Errc::ParseFailure, std::string("pca model: ") + e.what());
}

PcaAccumulator::PcaAccumulator(std::size_t dim) : dim_(dim) {
  if (dim == 0) {
    throw Error(Errc::DimensionMismatch, "pca: zero-dimensional data");
  }
  sum_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  second_moment_ =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
}

void PcaAccumulator::add_mean_pass(const std::vector<double>& row) {
  if (mean_done_) {
    throw Error(Errc::DimensionMismatch, "pca: mean pass already finished");
  }
  require_row_dim(row, dim_);
  sum_ += Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(dim_));
  ++n_mean_;
}

void PcaAccumulator::finish_mean_pass() {
  if (n_mean_ == 0) {
    throw Error(Errc::Infeasible, "pca: no samples");
  }
  mean_ = sum_ / static_cast<double>(n_mean_);
  mean_done_ = true;
}

void PcaAccumulator::add_covariance_pass(const std::vector<double>& row) {
  if (!mean_done_) {
    throw Error(Errc::DimensionMismatch, "pca: mean pass not finished");
  }
  require_row_dim(row, dim_);
  Eigen::VectorXd centered =
      Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(dim_)) - mean_;
  second_moment_.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0);
  ++n_cov_;
}

PcaModel PcaAccumulator::finish(int n_components) {
  if (n_components < 1) {
    throw Error(Errc::ConfigInvalid, "pca: n_components must be >= 1");
  }
  if (!mean_done_ || n_cov_ != n_mean_) {
    throw Error(Errc::DimensionMismatch,
                "pca: covariance pass saw a different sample count than the mean pass");
  }
  Eigen::MatrixXd covariance =
      Eigen::MatrixXd(second_moment_.selfadjointView<Eigen::Lower>()) /
      static_cast<double>(n_cov_);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  if (eig.info() != Eigen::Success) {
    throw Error(Errc::NumericalOverflow, "pca: eigendecomposition failed");
  }

  // Eigen returns ascending eigenvalues; walk from the back for descending.
  const Eigen::VectorXd& values = eig.eigenvalues();
  const Eigen::MatrixXd& vectors = eig.eigenvectors();
  const auto d = static_cast<Eigen::Index>(dim_);
  const double lambda_max = std::max(0.0, values(d - 1));
  const double rank_tol = lambda_max * 1e-12;

  PcaModel model;
  model.mean.assign(mean_.data(), mean_.data() + d);
  model.requested_components = n_components;
  model.n_samples = n_cov_;

  const Eigen::Index want = std::min<Eigen::Index>(n_components, d);
  for (Eigen::Index i = 0; i < want; ++i) {
    const Eigen::Index col = d - 1 - i;
    const double lambda = values(col);
    if (!(lambda > rank_tol) || !(lambda > 0.0)) break;  // numerically zero
    Eigen::VectorXd component = vectors.col(col);
    // Sign convention: the largest-magnitude entry (first on ties) positive.
    Eigen::Index pivot = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double mag = std::abs(component(j));
      if (mag > best) {
        best = mag;
        pivot = j;
      }
    }
    if (component(pivot) < 0.0) component = -component;
    model.components.emplace_back(component.data(), component.data() + d);
    model.explained_variance.push_back(lambda);
  }
  model.rank_deficient =
      model.components.size() < static_cast<std::size_t>(n_components);
  return model;
}

PcaFit fit_pca(const std::vector<std::vector<double>>& rows, int n_components) {
  if (n_components < 1) {
    throw Error(Errc::ConfigInvalid, "pca: n_components must be >= 1");
  }
  if (rows.empty()) {
    throw Error(Errc::Infeasible, "pca: no samples");
  }
  // Accumulate in a canonical row order so the model depends only on the
  // multiset of rows, not on the order callers gathered them in. Byte-wise
  // comparison is a deterministic total order even for values (NaN, -0.0)
  // where operator< is not.
  const std::size_t dim = rows.front().size();
  std::vector<const std::vector<double>*> ordered;
  ordered.reserve(rows.size());
  for (const auto& row : rows) {
    require_row_dim(row, dim);
    ordered.push_back(&row);
  }
  std::sort(ordered.begin(), ordered.end(),
            [dim](const std::vector<double>* a, const std::vector<double>* b) {
              return std::memcmp(a->data(), b->data(), dim * sizeof(double)) < 0;
            });

  PcaAccumulator acc(dim);
  for (const auto* row : ordered) acc.add_mean_pass(*row);
  acc.finish_mean_pass();
  for (const auto* row : ordered) acc.add_covariance_pass(*row);

  PcaFit fit;
  fit.model = acc.finish(n_components);
  fit.scores.reserve(rows.size());
  for (const auto& row : rows) fit.scores.push_back(pca_project(fit.model, row));
  return fit;
}

std::vector<double> pca_project(const PcaModel& model, const std::vector<double>& x) {
  if (x.size() != model.mean.size()) {
    throw Error(Errc::DimensionMismatch,
                "pca: vector has dimension " + std::to_string(x.size()) +
                    ", model expects " + std::to_string(model.mean.size()));
  }
  std::vector<double> out(model.components.size(), 0.0);
  for (std::size_t k = 0; k < model.components.size(); ++k) {
    const std::vector<double>& comp = model.components[k];
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      dot += (x[j] - model.mean[j]) * comp[j];
    }
    out[k] = dot;
  }
  return out;
}

}  // namespace trajforge
