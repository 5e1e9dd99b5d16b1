// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trajforge/frame.hpp"

namespace trajforge {

struct SoapParams {
  double r_cut = 5.0;  // Å, neighbor density cutoff
  int n_max = 8;       // radial basis functions
  int l_max = 6;       // max spherical-harmonic degree
  double sigma = 0.5;  // Å, Gaussian smearing of atom positions
};

// Orthonormalized polynomial radial basis on [0, r_cut]:
//   g_n(r) = sum_a W_na (r_cut - r)^(a+2),  a = 1..n_max,
// with W chosen so that ∫ g_n g_m r^2 dr = δ_nm (Löwdin S^{-1/2} on the
// analytic overlap of the power functions).
class RadialBasis {
 public:
  RadialBasis(int n_max, double r_cut);

  double evaluate(int n, double r) const;  // n in [0, n_max)
  int n_max() const noexcept { return n_max_; }
  double r_cut() const noexcept { return r_cut_; }

 private:
  int n_max_;
  double r_cut_;
  Eigen::MatrixXd coef_;  // row n: coefficients over (r_cut - r)^(a+2)
};

// Real orthonormal spherical harmonics Y_lm for all l <= l_max, evaluated at
// the unit direction `dir`. Output is indexed y[l*l + l + m] for
// m in [-l, l]. No Condon–Shortley phase.
void real_spherical_harmonics(int l_max, const Vec3& dir, std::vector<double>& out);

// Exponentially scaled modified spherical Bessel functions
// î_l(a) = e^{-a} i_l(a) for l = 0..l_max; stable for all a >= 0.
void scaled_bessel_i(int l_max, double a, std::vector<double>& out);

// Nodes and weights of N-point Gauss–Legendre quadrature on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights);

// Smooth-overlap-of-atomic-positions power spectrum with outer (per-atom)
// averaging. The neighbor density of each species channel is a sum of
// Gaussians (width sigma) over all atoms of that species within r_cut of the
// center, periodic images included, plus the central atom itself.
//
// Layout of the returned vector:
//   index = (pair(A,B) * nRadialPairs + pair(n,n')) * (l_max+1) + l
// where species pairs A<=B and radial pairs n<=n' run in lexicographic order
// over the calculator's sorted element list, giving a total length of
//   S(S+1)/2 * n_max(n_max+1)/2 * (l_max+1).
// Entries are symmetrized products
//   p_{AB,nn',l} = 1/2 Σ_m (c^A_nlm c^B_n'lm + c^B_nlm c^A_n'lm).
//
// Accumulation follows a canonical internal ordering (atoms and neighbors
// sorted by species and geometry), so permuting or translating the input
// reproduces the output bit for bit; rotations are invariant up to floating-
// point roundoff.
class SoapDescriptorCalculator {
 public:
  // `elements` fixes the species channels; duplicates are removed and the
  // set is sorted by atomic number. Frames containing species outside this
  // set are rejected (std::invalid_argument).
  SoapDescriptorCalculator(const SoapParams& params,
                           std::vector<std::string> elements);

  std::size_t dimension() const noexcept;
  const std::vector<std::string>& elements() const noexcept { return elements_; }
  const SoapParams& params() const noexcept { return params_; }
  const RadialBasis& radial_basis() const noexcept { return basis_; }

  // Throws NumericalOverflow for degenerate cells (volume < 1e-6 Å^3).
  std::vector<double> compute(const Frame& frame) const;

  // Per-center expansion coefficients c[species](n, l*l+l+m), exposed so
  // tests can exercise the expansion and the power-spectrum combination
  // separately.
  std::vector<Eigen::MatrixXd> expansion_coefficients(const Frame& frame,
                                                      std::size_t atom_index) const;

  // Combines per-species expansion coefficients into the power spectrum
  // (layout documented above).
  std::vector<double> power_spectrum(const std::vector<Eigen::MatrixXd>& c) const;

 private:
  SoapParams params_;
  std::vector<std::string> elements_;  // sorted by atomic number
  std::vector<int> element_z_;         // atomic indices matching elements_
  RadialBasis basis_;
  std::vector<double> quad_nodes_, quad_weights_;  // radial quadrature
  Eigen::MatrixXd basis_at_nodes_;                 // (n_max, n_quad)
  std::vector<double> self_integral_;              // ∫ g_n e^{-r²/2σ²} r² dr
};

}  // namespace trajforge
