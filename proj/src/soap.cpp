// SPDX-License-Identifier: Apache-2.0
#include "trajforge/soap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "trajforge/elements.hpp"
#include "trajforge/errors.hpp"

namespace trajforge {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.assign(static_cast<std::size_t>(n), 0.0);
  weights.assign(static_cast<std::size_t>(n), 0.0);
  // Newton iteration on P_n, seeded with the Chebyshev approximation of the
  // roots; standard construction on [-1, 1], then affine map to [a, b].
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      // p0 = P_n(x); derivative from the recurrence.
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    nodes[static_cast<std::size_t>(i)] = x;
    nodes[static_cast<std::size_t>(n - 1 - i)] = -x;
    weights[static_cast<std::size_t>(i)] = w;
    weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    // Map from [-1,1]; negate so nodes come out ascending in [a, b].
    nodes[static_cast<std::size_t>(i)] = mid - half * nodes[static_cast<std::size_t>(i)];
    weights[static_cast<std::size_t>(i)] *= half;
  }
}

RadialBasis::RadialBasis(int n_max, double r_cut) : n_max_(n_max), r_cut_(r_cut) {
  if (n_max < 1 || !(r_cut > 0.0)) {
    throw Error(Errc::ConfigInvalid, "radial basis needs n_max >= 1 and r_cut > 0");
  }
  // Analytic overlap of φ_a(r) = (rc - r)^(a+2), a = 1..n_max:
  //   S_ab = ∫ φ_a φ_b r² dr = 2 rc^(a+b+7) / ((a+b+5)(a+b+6)(a+b+7)).
  Eigen::MatrixXd overlap(n_max, n_max);
  for (int a = 1; a <= n_max; ++a) {
    for (int b = 1; b <= n_max; ++b) {
      double m = a + b;
      overlap(a - 1, b - 1) =
          2.0 * std::pow(r_cut, m + 7.0) / ((m + 5.0) * (m + 6.0) * (m + 7.0));
    }
  }
  // Pre-scale each φ to unit norm; the remaining matrix has unit diagonal and
  // a far better condition number before the Löwdin inverse square root.
  Eigen::VectorXd scale(n_max);
  for (int a = 0; a < n_max; ++a) scale(a) = 1.0 / std::sqrt(overlap(a, a));
  Eigen::MatrixXd normalized =
      scale.asDiagonal() * overlap * scale.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized);
  if (eig.info() != Eigen::Success) {
    throw Error(Errc::NumericalOverflow, "radial overlap eigensolve failed");
  }
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw Error(Errc::NumericalOverflow, "radial overlap not positive definite");
  }
  Eigen::MatrixXd inv_sqrt =
      eig.eigenvectors() *
      eig.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
      eig.eigenvectors().transpose();
  // g_n = Σ_a (S'^{-1/2})_na scale_a φ_a
  coef_ = inv_sqrt * scale.asDiagonal();
}

double RadialBasis::evaluate(int n, double r) const {
  if (r < 0.0 || r >= r_cut_) return 0.0;
  const double u = r_cut_ - r;
  // powers (rc - r)^(a+2), a = 1..n_max
  double value = 0.0;
  double power = u * u * u;  // a = 1 → exponent 3
  for (int a = 0; a < n_max_; ++a) {
    value += coef_(n, a) * power;
    power *= u;
  }
  return value;
}

void real_spherical_harmonics(int l_max, const Vec3& dir, std::vector<double>& out) {
  const int size = (l_max + 1) * (l_max + 1);
  out.assign(static_cast<std::size_t>(size), 0.0);
  const double x = dir[0], y = dir[1], z = dir[2];
  const double ct = z;                        // cos θ
  const double st = std::sqrt(std::max(0.0, 1.0 - z * z));  // sin θ ≥ 0
  const double phi = std::atan2(y, x);

  // Associated Legendre values P_l^m(cos θ) without Condon–Shortley phase,
  // via the standard (m,m) → (m+1,m) → upward-in-l recurrences.
  std::vector<std::vector<double>> p(static_cast<std::size_t>(l_max + 1),
                                     std::vector<double>(static_cast<std::size_t>(l_max + 1), 0.0));
  p[0][0] = 1.0;
  for (int m = 1; m <= l_max; ++m) {
    p[static_cast<std::size_t>(m)][static_cast<std::size_t>(m)] =
        p[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(m - 1)] *
        (2.0 * m - 1.0) * st;
  }
  for (int m = 0; m < l_max; ++m) {
    p[static_cast<std::size_t>(m + 1)][static_cast<std::size_t>(m)] =
        ct * (2.0 * m + 1.0) * p[static_cast<std::size_t>(m)][static_cast<std::size_t>(m)];
  }
  for (int m = 0; m <= l_max; ++m) {
    for (int l = m + 2; l <= l_max; ++l) {
      p[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)] =
          ((2.0 * l - 1.0) * ct * p[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(m)] -
           (l + m - 1.0) * p[static_cast<std::size_t>(l - 2)][static_cast<std::size_t>(m)]) /
          (l - m);
    }
  }

  // cos(mφ)/sin(mφ) by angle-addition recurrence.
  std::vector<double> cos_m(static_cast<std::size_t>(l_max + 1)),
      sin_m(static_cast<std::size_t>(l_max + 1));
  cos_m[0] = 1.0;
  sin_m[0] = 0.0;
  const double cp = std::cos(phi), sp = std::sin(phi);
  for (int m = 1; m <= l_max; ++m) {
    cos_m[static_cast<std::size_t>(m)] =
        cos_m[static_cast<std::size_t>(m - 1)] * cp - sin_m[static_cast<std::size_t>(m - 1)] * sp;
    sin_m[static_cast<std::size_t>(m)] =
        sin_m[static_cast<std::size_t>(m - 1)] * cp + cos_m[static_cast<std::size_t>(m - 1)] * sp;
  }

  for (int l = 0; l <= l_max; ++l) {
    const int base = l * l + l;
    // N_lm = sqrt((2l+1)/(4π) (l−m)!/(l+m)!) built incrementally from m = 0.
    double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * kPi));
    out[static_cast<std::size_t>(base)] =
        norm * p[static_cast<std::size_t>(l)][0];
    for (int m = 1; m <= l; ++m) {
      norm /= std::sqrt(static_cast<double>((l - m + 1) * (l + m)));
      const double plm = p[static_cast<std::size_t>(l)][static_cast<std::size_t>(m)];
      const double common = std::numbers::sqrt2 * norm * plm;
      out[static_cast<std::size_t>(base + m)] = common * cos_m[static_cast<std::size_t>(m)];
      out[static_cast<std::size_t>(base - m)] = common * sin_m[static_cast<std::size_t>(m)];
    }
  }
}

void scaled_bessel_i(int l_max, double a, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(l_max + 1), 0.0);
  if (a < 0.0) throw Error(Errc::NumericalOverflow, "bessel argument negative");
  if (a < 1e-3) {
    // Series: î_l(a) ≈ e^{-a} a^l/(2l+1)!! (1 + a²/(2(2l+3)) + ...). Three
    // terms give ~1e-20 truncation at a = 1e-3.
    const double ea = std::exp(-a);
    double power = 1.0;    // a^l
    double dfact = 1.0;    // (2l+1)!!
    for (int l = 0; l <= l_max; ++l) {
      if (l > 0) {
        power *= a;
        dfact *= (2.0 * l + 1.0);
      }
      const double a2 = a * a;
      double series = 1.0 + a2 / (2.0 * (2.0 * l + 3.0)) +
                      a2 * a2 / (8.0 * (2.0 * l + 3.0) * (2.0 * l + 5.0));
      out[static_cast<std::size_t>(l)] = ea * power / dfact * series;
    }
    return;
  }
  if (a > 2.0 * static_cast<double>(l_max) + 2.0) {
    // Upward recurrence î_{l+1} = î_{l-1} - (2l+1)/a î_l from the closed
    // forms. Stable while the order stays below the argument: the subtracted
    // terms remain comparable, so cancellation is bounded by î_{l_max}/î_0,
    // a modest factor in this branch.
    const double em = std::expm1(-2.0 * a);  // e^{-2a} - 1, no cancellation
    out[0] = -em / (2.0 * a);
    if (l_max >= 1) {
      out[1] = (2.0 * a + (a + 1.0) * em) / (2.0 * a * a);
    }
    for (int l = 1; l < l_max; ++l) {
      out[static_cast<std::size_t>(l + 1)] =
          out[static_cast<std::size_t>(l - 1)] -
          ((2.0 * l + 1.0) / a) * out[static_cast<std::size_t>(l)];
    }
    return;
  }
  // Miller downward recurrence: î_{l-1} = î_{l+1} + (2l+1)/a î_l with an
  // arbitrary start high above BOTH l_max and the argument, normalized
  // against the closed-form î_0. Starting below the turning point l ≈ a
  // would leave the seed's dominant-solution admixture undamped.
  const int start = l_max + 16 + static_cast<int>(a);
  double up1 = 0.0;          // î at l+1
  double u = 1e-280;         // î at l (arbitrary scale)
  for (int l = start; l >= 1; --l) {
    double um1 = up1 + ((2.0 * l + 1.0) / a) * u;
    if (l - 1 <= l_max) out[static_cast<std::size_t>(l - 1)] = um1;
    if (l <= l_max) out[static_cast<std::size_t>(l)] = u;
    up1 = u;
    u = um1;
    if (std::abs(u) > 1e250) {  // rescale to avoid overflow
      const double inv = 1.0 / u;
      up1 *= inv;
      u = 1.0;
      for (int k = 0; k <= l_max; ++k) out[static_cast<std::size_t>(k)] *= inv;
    }
  }
  const double i0 = -std::expm1(-2.0 * a) / (2.0 * a);
  const double ratio = i0 / out[0];
  for (double& v : out) v *= ratio;
}

SoapDescriptorCalculator::SoapDescriptorCalculator(const SoapParams& params,
                                                   std::vector<std::string> elements)
    : params_(params), basis_(params.n_max, params.r_cut) {
  if (params.l_max < 0 || !(params.sigma > 0.0)) {
    throw Error(Errc::ConfigInvalid, "invalid SOAP parameters");
  }
  std::set<int> z_set;
  for (const std::string& symbol : elements) {
    auto z = element_index(symbol);
    if (!z) {
      throw Error(Errc::ConfigInvalid, "unknown element \"" + symbol + "\"");
    }
    z_set.insert(*z);
  }
  if (z_set.empty()) {
    throw Error(Errc::ConfigInvalid, "SOAP element set is empty");
  }
  for (int z : z_set) {
    element_z_.push_back(z);
    elements_.emplace_back(kElementSymbols[static_cast<std::size_t>(z)]);
  }

  constexpr int kQuadPoints = 100;
  gauss_legendre(kQuadPoints, 0.0, params_.r_cut, quad_nodes_, quad_weights_);
  basis_at_nodes_.resize(params_.n_max, kQuadPoints);
  for (int n = 0; n < params_.n_max; ++n) {
    for (int k = 0; k < kQuadPoints; ++k) {
      basis_at_nodes_(n, k) = basis_.evaluate(n, quad_nodes_[static_cast<std::size_t>(k)]);
    }
  }
  const double two_sigma2 = 2.0 * params_.sigma * params_.sigma;
  self_integral_.assign(static_cast<std::size_t>(params_.n_max), 0.0);
  for (int n = 0; n < params_.n_max; ++n) {
    double sum = 0.0;
    for (int k = 0; k < kQuadPoints; ++k) {
      const double r = quad_nodes_[static_cast<std::size_t>(k)];
      sum += quad_weights_[static_cast<std::size_t>(k)] * basis_at_nodes_(n, k) *
             std::exp(-r * r / two_sigma2) * r * r;
    }
    self_integral_[static_cast<std::size_t>(n)] = sum;
  }
}

std::size_t SoapDescriptorCalculator::dimension() const noexcept {
  const std::size_t s = elements_.size();
  const std::size_t n = static_cast<std::size_t>(params_.n_max);
  return (s * (s + 1) / 2) * (n * (n + 1) / 2) * static_cast<std::size_t>(params_.l_max + 1);
}

namespace {

struct Neighbor {
  int species_channel;
  double r;
  Vec3 displacement;
};

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  if (a.species_channel != b.species_channel) return a.species_channel < b.species_channel;
  if (a.r != b.r) return a.r < b.r;
  if (a.displacement[0] != b.displacement[0]) return a.displacement[0] < b.displacement[0];
  if (a.displacement[1] != b.displacement[1]) return a.displacement[1] < b.displacement[1];
  return a.displacement[2] < b.displacement[2];
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

}  // namespace

std::vector<Eigen::MatrixXd> SoapDescriptorCalculator::expansion_coefficients(
    const Frame& frame, std::size_t atom_index) const {
  const double volume = det3(frame.lattice);
  if (!(volume >= 1e-6)) {
    throw Error(Errc::NumericalOverflow,
                "cell volume below 1e-6 Å³ in " + frame.frame_id);
  }

  std::vector<int> channel_of_atom(frame.species.size());
  for (std::size_t i = 0; i < frame.species.size(); ++i) {
    auto z = element_index(frame.species[i]);
    if (!z) {
      throw std::invalid_argument("unknown element \"" + frame.species[i] + "\"");
    }
    auto it = std::find(element_z_.begin(), element_z_.end(), *z);
    if (it == element_z_.end()) {
      throw std::invalid_argument("species \"" + frame.species[i] +
                                  "\" outside the descriptor element set");
    }
    channel_of_atom[i] = static_cast<int>(it - element_z_.begin());
  }

  // Periodic images: enough replicas along each lattice vector to cover
  // r_cut, from the inter-plane spacings d_i = V / |a_j × a_k|.
  const Mat3& lat = frame.lattice;
  int reps[3];
  for (int i = 0; i < 3; ++i) {
    const Vec3& b = lat[(i + 1) % 3];
    const Vec3& c = lat[(i + 2) % 3];
    const double spacing = std::abs(volume) / norm3(cross(b, c));
    reps[i] = static_cast<int>(std::ceil(params_.r_cut / spacing));
  }

  const Vec3& center = frame.positions[atom_index];
  std::vector<Neighbor> neighbors;
  for (std::size_t j = 0; j < frame.positions.size(); ++j) {
    for (int sa = -reps[0]; sa <= reps[0]; ++sa) {
      for (int sb = -reps[1]; sb <= reps[1]; ++sb) {
        for (int sc = -reps[2]; sc <= reps[2]; ++sc) {
          Vec3 d;
          for (int k = 0; k < 3; ++k) {
            d[k] = frame.positions[j][k] + sa * lat[0][k] + sb * lat[1][k] +
                   sc * lat[2][k] - center[k];
          }
          const double r = norm3(d);
          if (r <= params_.r_cut) {
            neighbors.push_back(Neighbor{channel_of_atom[j], r, d});
          }
        }
      }
    }
  }
  std::sort(neighbors.begin(), neighbors.end(), neighbor_less);

  const int n_max = params_.n_max;
  const int l_max = params_.l_max;
  const int lm_size = (l_max + 1) * (l_max + 1);
  std::vector<Eigen::MatrixXd> c(elements_.size(),
                                 Eigen::MatrixXd::Zero(n_max, lm_size));

  const double sigma2 = params_.sigma * params_.sigma;
  const double two_sigma2 = 2.0 * sigma2;
  const int nq = static_cast<int>(quad_nodes_.size());
  std::vector<double> ylm, bessel(static_cast<std::size_t>(l_max + 1));
  Eigen::MatrixXd radial(n_max, l_max + 1);

  for (const Neighbor& nb : neighbors) {
    Eigen::MatrixXd& target = c[static_cast<std::size_t>(nb.species_channel)];
    if (nb.r < 1e-8) {
      // Central/degenerate neighbor: the density term is isotropic and feeds
      // only (l, m) = (0, 0): c_n00 += 2√π ∫ g_n e^{-r²/2σ²} r² dr.
      for (int n = 0; n < n_max; ++n) {
        target(n, 0) += 2.0 * std::sqrt(kPi) * self_integral_[static_cast<std::size_t>(n)];
      }
      continue;
    }
    const Vec3 dir = {nb.displacement[0] / nb.r, nb.displacement[1] / nb.r,
                      nb.displacement[2] / nb.r};
    real_spherical_harmonics(l_max, dir, ylm);

    // Radial integrals R_nl = ∫ g_n(r) r² e^{-(r-r_j)²/2σ²} î_l(r r_j/σ²) dr
    // on the shared Gauss–Legendre grid.
    radial.setZero();
    for (int k = 0; k < nq; ++k) {
      const double r = quad_nodes_[static_cast<std::size_t>(k)];
      const double dr = r - nb.r;
      const double gauss = std::exp(-dr * dr / two_sigma2);
      if (gauss < 1e-300) continue;
      scaled_bessel_i(l_max, r * nb.r / sigma2, bessel);
      const double w = quad_weights_[static_cast<std::size_t>(k)] * r * r * gauss;
      for (int l = 0; l <= l_max; ++l) {
        const double wl = w * bessel[static_cast<std::size_t>(l)];
        for (int n = 0; n < n_max; ++n) {
          radial(n, l) += wl * basis_at_nodes_(n, k);
        }
      }
    }

    for (int l = 0; l <= l_max; ++l) {
      const int base = l * l;
      for (int m = 0; m < 2 * l + 1; ++m) {
        const double y = ylm[static_cast<std::size_t>(base + m)];
        if (y == 0.0) continue;
        const double fourpi_y = 4.0 * kPi * y;
        for (int n = 0; n < n_max; ++n) {
          target(n, base + m) += fourpi_y * radial(n, l);
        }
      }
    }
  }
  return c;
}

std::vector<double> SoapDescriptorCalculator::power_spectrum(
    const std::vector<Eigen::MatrixXd>& c) const {
  const int n_max = params_.n_max;
  const int l_max = params_.l_max;
  const std::size_t n_species = elements_.size();
  std::vector<double> p;
  p.reserve(dimension());
  for (std::size_t A = 0; A < n_species; ++A) {
    for (std::size_t B = A; B < n_species; ++B) {
      for (int n = 0; n < n_max; ++n) {
        for (int np = n; np < n_max; ++np) {
          for (int l = 0; l <= l_max; ++l) {
            const int base = l * l;
            double sum = 0.0;
            for (int m = 0; m < 2 * l + 1; ++m) {
              sum += 0.5 * (c[A](n, base + m) * c[B](np, base + m) +
                            c[B](n, base + m) * c[A](np, base + m));
            }
            p.push_back(sum);
          }
        }
      }
    }
  }
  return p;
}

std::vector<double> SoapDescriptorCalculator::compute(const Frame& frame) const {
  if (frame.species.empty()) {
    throw std::invalid_argument("cannot compute a descriptor for an empty structure");
  }
  // Canonical atom order (species channel, then position) so the averaged
  // spectrum is bit-identical under input permutation.
  std::vector<std::size_t> order(frame.species.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frame.species[a] != frame.species[b]) return frame.species[a] < frame.species[b];
    if (frame.positions[a][0] != frame.positions[b][0])
      return frame.positions[a][0] < frame.positions[b][0];
    if (frame.positions[a][1] != frame.positions[b][1])
      return frame.positions[a][1] < frame.positions[b][1];
    return frame.positions[a][2] < frame.positions[b][2];
  });

  std::vector<double> averaged(dimension(), 0.0);
  for (std::size_t idx : order) {
    std::vector<Eigen::MatrixXd> c = expansion_coefficients(frame, idx);
    std::vector<double> p = power_spectrum(c);
    for (std::size_t k = 0; k < averaged.size(); ++k) averaged[k] += p[k];
  }
  const double inv = 1.0 / static_cast<double>(frame.species.size());
  for (double& v : averaged) v *= inv;
  return averaged;
}

}  // namespace trajforge
