// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "support/oracles.hpp"
#include "support/testutil.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/jsonl.hpp"
#include "trajforge/pca.hpp"

using namespace trajforge;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Rows spanning exactly a 2-plane in 10-D, with distinct variances per axis.
std::vector<std::vector<double>> rank2_rows(std::mt19937_64& rng, int n) {
  std::vector<double> u(10, 0.0), v(10, 0.0);
  for (std::size_t i = 0; i < 10; ++i) {
    u[i] = testutil::uniform01(rng) - 0.5;
    v[i] = testutil::uniform01(rng) - 0.5;
  }
  const double nu = std::sqrt(dot(u, u));
  for (double& x : u) x /= nu;
  const double uv = dot(u, v);
  for (std::size_t i = 0; i < 10; ++i) v[i] -= uv * u[i];
  const double nv = std::sqrt(dot(v, v));
  for (double& x : v) x /= nv;

  std::vector<std::vector<double>> rows;
  for (int s = 0; s < n; ++s) {
    const double a = 3.0 * (testutil::uniform01(rng) - 0.5);
    const double b = 1.0 * (testutil::uniform01(rng) - 0.5);
    std::vector<double> row(10, 0.0);
    for (std::size_t i = 0; i < 10; ++i) row[i] = 7.0 + a * u[i] + b * v[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TEST_CASE("two points on the x axis: unit variance, pinned component") {
  const PcaFit fit = fit_pca({{1.0, 0.0}, {-1.0, 0.0}}, 1);
  REQUIRE(fit.model.components.size() == 1);
  CHECK(fit.model.mean == std::vector<double>{0.0, 0.0});
  // Population covariance (divide by n): variance 1, not 2.
  CHECK(fit.model.explained_variance[0] == doctest::Approx(1.0).epsilon(1e-14));
  // Sign convention: largest-|entry| coordinate made positive.
  CHECK(fit.model.components[0][0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fit.model.components[0][1] == doctest::Approx(0.0).scale(1.0));
  REQUIRE(fit.scores.size() == 2);
  CHECK(fit.scores[0][0] == doctest::Approx(1.0));
  CHECK(fit.scores[1][0] == doctest::Approx(-1.0));
}

TEST_CASE("rank-2 data in 10-D reconstructs to 1e-10") {
  std::mt19937_64 rng(2024);
  const auto rows = rank2_rows(rng, 60);
  const PcaFit fit = fit_pca(rows, 2);
  REQUIRE(fit.model.components.size() == 2);
  CHECK_FALSE(fit.model.rank_deficient);
  CHECK(fit.model.n_samples == 60);

  // Projecting onto the two components and reconstructing recovers each row.
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::vector<double> score = pca_project(fit.model, rows[r]);
    REQUIRE(score.size() == 2);
    CHECK(score == fit.scores[r]);
    double err = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      double rec = fit.model.mean[i];
      for (std::size_t k = 0; k < 2; ++k) {
        rec += score[k] * fit.model.components[k][i];
      }
      err = std::max(err, std::abs(rec - rows[r][i]));
    }
    CHECK(err < 1e-10);
  }

  SUBCASE("components are orthonormal to 1e-10") {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = i; j < 2; ++j) {
        const double g = dot(fit.model.components[i], fit.model.components[j]);
        CHECK(g == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10).scale(1.0));
      }
    }
  }

  SUBCASE("variances are descending and the rest of the spectrum is numerically zero") {
    CHECK(fit.model.explained_variance[0] > fit.model.explained_variance[1]);
    const PcaFit wide = fit_pca(rows, 10);
    CHECK(wide.model.rank_deficient);  // only 2 non-zero directions exist
    CHECK(wide.model.n_components() == 2);
    CHECK(wide.model.requested_components == 10);
  }
}

TEST_CASE("model is a pure function of the input multiset") {
  std::mt19937_64 rng(7);
  auto rows = rank2_rows(rng, 30);
  const PcaFit a = fit_pca(rows, 2);
  std::reverse(rows.begin(), rows.end());
  const PcaFit b = fit_pca(rows, 2);
  CHECK(a.model.mean == b.model.mean);
  CHECK(a.model.components == b.model.components);
  CHECK(a.model.explained_variance == b.model.explained_variance);
}

TEST_CASE("pca agrees with an independent Jacobi SVD") {
  std::mt19937_64 rng(99);
  // Full-rank 6-D data this time.
  std::vector<std::vector<double>> rows;
  for (int s = 0; s < 40; ++s) {
    std::vector<double> row(6);
    for (std::size_t i = 0; i < 6; ++i) {
      row[i] = (1.0 + static_cast<double>(i)) * (testutil::uniform01(rng) - 0.5);
    }
    rows.push_back(std::move(row));
  }
  const PcaFit fit = fit_pca(rows, 6);

  // Oracle: SVD of the centered data matrix; right singular vectors are the
  // components, squared singular values / n the variances.
  std::vector<double> mean(6, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < 6; ++i) mean[i] += r[i];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  std::vector<std::vector<double>> centered = rows;
  for (auto& r : centered) {
    for (std::size_t i = 0; i < 6; ++i) r[i] -= mean[i];
  }
  const oracles::SvdOracleResult svd = oracles::jacobi_svd(centered);

  for (std::size_t k = 0; k < 6; ++k) {
    const double var = svd.singular_values[k] * svd.singular_values[k] /
                       static_cast<double>(rows.size());
    CHECK(fit.model.explained_variance[k] == doctest::Approx(var).epsilon(1e-8));
    // Compare modulo sign: align on the dot product.
    const double align = dot(fit.model.components[k], svd.v_columns[k]);
    const double s = align >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(fit.model.components[k][i] ==
            doctest::Approx(s * svd.v_columns[k][i]).epsilon(1e-8).scale(1.0));
    }
  }
}

TEST_CASE("accumulator streaming matches in-memory fit") {
  std::mt19937_64 rng(5);
  auto rows = rank2_rows(rng, 25);
  // fit_pca canonicalizes row order internally; pre-sorting the same way
  // makes the streamed accumulation bitwise comparable.
  std::sort(rows.begin(), rows.end(),
            [](const std::vector<double>& a, const std::vector<double>& b) {
              return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) < 0;
            });
  PcaAccumulator acc(10);
  for (const auto& r : rows) acc.add_mean_pass(r);
  acc.finish_mean_pass();
  for (const auto& r : rows) acc.add_covariance_pass(r);
  const PcaModel streamed = acc.finish(2);
  const PcaFit direct = fit_pca(rows, 2);
  CHECK(streamed.mean == direct.model.mean);
  CHECK(streamed.components == direct.model.components);
  CHECK(streamed.explained_variance == direct.model.explained_variance);
  CHECK(acc.count() == 25);
}

TEST_CASE("model json round trip") {
  std::mt19937_64 rng(3);
  const auto rows = rank2_rows(rng, 12);
  const PcaModel model = fit_pca(rows, 2).model;
  const nlohmann::json doc = pca_model_to_json(model);
  const PcaModel back = pca_model_from_json(doc);
  CHECK(back.mean == model.mean);
  CHECK(back.components == model.components);
  CHECK(back.explained_variance == model.explained_variance);
  CHECK(back.rank_deficient == model.rank_deficient);
  CHECK(back.requested_components == model.requested_components);
  CHECK(back.n_samples == model.n_samples);
  // Serialized form is stable under canonical dumping.
  CHECK(canonical_dump(pca_model_to_json(back)) == canonical_dump(doc));

  try {
    pca_model_from_json(nlohmann::json::object());
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseFailure);
  }
}

TEST_CASE("error paths") {
  CHECK_THROWS_AS(fit_pca({}, 1), Error);                       // Infeasible
  CHECK_THROWS_AS(fit_pca({{1.0, 2.0}}, 0), Error);             // ConfigInvalid
  CHECK_THROWS_AS(fit_pca({{1.0, 2.0}, {1.0}}, 1), Error);      // ragged
  CHECK_THROWS_AS(PcaAccumulator(0), Error);

  PcaAccumulator acc(2);
  acc.add_mean_pass({1.0, 2.0});
  CHECK_THROWS_AS(acc.add_mean_pass({1.0}), Error);
  acc.add_mean_pass({3.0, 4.0});
  acc.finish_mean_pass();
  acc.add_covariance_pass({1.0, 2.0});
  acc.add_covariance_pass({3.0, 4.0});
  const PcaModel model = acc.finish(1);

  CHECK_THROWS_AS(pca_project(model, {1.0, 2.0, 3.0}), Error);
  const auto p = pca_project(model, {5.0, -1.0});
  CHECK(p.size() == 1);

  // Covariance pass must see as many rows as the mean pass.
  PcaAccumulator unbalanced(2);
  unbalanced.add_mean_pass({1.0, 2.0});
  unbalanced.add_mean_pass({2.0, 1.0});
  unbalanced.finish_mean_pass();
  unbalanced.add_covariance_pass({1.0, 2.0});
  CHECK_THROWS_AS(unbalanced.finish(1), Error);
}

TEST_CASE("single repeated point: zero variance, rank deficient") {
  const PcaFit fit = fit_pca({{3.0, 3.0}, {3.0, 3.0}}, 1);
  CHECK(fit.model.rank_deficient);
  CHECK(fit.model.n_components() == 0);
  CHECK(fit.model.mean == std::vector<double>{3.0, 3.0});
  CHECK(pca_project(fit.model, {9.0, 9.0}).empty());
}
