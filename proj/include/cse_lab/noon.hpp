#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <tuple>
#include <algorithm>
#include <string>
#include <vector>

#include "decompose.hpp"
#include "error.hpp"
#include "fock.hpp"
#include "sampler.hpp"

namespace cse_lab {

/// Amplitude of |j, N-j> when |n, m> passes the balanced beamsplitter
/// (phase factors aside). Evaluated term by term in log space.
inline double r_coefficient(int n, int m, int j) {
  detail::require(n >= 0 && m >= 0, ErrorKind::invalid_argument, "photon numbers must be nonnegative");
  const int total = n + m;
  detail::require(j >= 0 && j <= total, ErrorKind::invalid_argument,
                  "output index j must lie in [0, n + m]");
  if (n == m && j % 2 == 1) return 0.0;
  const double base = 0.5 * (std::lgamma(n + 1.0) + std::lgamma(m + 1.0) + std::lgamma(j + 1.0) +
                             std::lgamma(total - j + 1.0)) -
                      0.5 * total * std::numbers::ln2;
  double s = 0.0;
  for (int k = std::max(0, j - m); k <= std::min(n, j); ++k) {
    const double mag = std::exp(base - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - std::lgamma(j - k + 1.0) -
                                std::lgamma(m - j + k + 1.0));
    s += ((m - j + k) % 2 == 0) ? mag : -mag;
  }
  return s;
}

struct RCoefficientTable {
  int n = 0, m = 0;
  std::vector<double> values;  // j = 0..n+m
};

inline RCoefficientTable r_table(int n, int m) {
  RCoefficientTable t{n, m, {}};
  for (int j = 0; j <= n + m; ++j) t.values.push_back(r_coefficient(n, m, j));
  return t;
}

namespace detail {

inline void require_two_mode(const DensityMatrix& rho) {
  require(rho.modes() == 2 && rho.dims()[0] == rho.dims()[1], ErrorKind::invalid_argument,
          "expected a two-mode operator with equal cutoffs");
}

}  // namespace detail

/// Output of |n, m> through the beamsplitter with phase theta on the second arm.
inline Vector beamsplitter_vector(int n, int m, double theta, FockDim d) {
  const int total = n + m;
  detail::require(total < d.dim, ErrorKind::cutoff_too_small,
                  "cutoff too small for n + m = " + std::to_string(total));
  Vector v = Vector::Zero(static_cast<Eigen::Index>(d.dim) * d.dim);
  for (int j = 0; j <= total; ++j)
    v(j * d.dim + (total - j)) = std::polar(r_coefficient(n, m, j), -theta * j);
  return v;
}

inline DensityMatrix beamsplitter_state(int n, int m, double theta, FockDim d) {
  return DensityMatrix::from_pure({d, d}, beamsplitter_vector(n, m, theta, d));
}

/// Fock-space beamsplitter on the photon-number sectors that fit the cutoff
/// (total photon number below d); higher sectors map to zero.
inline Matrix beamsplitter_unitary(double theta, FockDim d) {
  const Eigen::Index dim = static_cast<Eigen::Index>(d.dim) * d.dim;
  Matrix u = Matrix::Zero(dim, dim);
  for (int total = 0; total < d.dim; ++total) {
    for (int n = 0; n <= total; ++n) {
      const int m = total - n;
      for (int j = 0; j <= total; ++j)
        u(j * d.dim + (total - j), n * d.dim + m) = std::polar(r_coefficient(n, m, j), theta * (total - j));
    }
  }
  return u;
}

namespace detail {

inline Matrix project_low_sectors(const Matrix& m, int d) {
  Matrix out = m;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if (a + b >= d) {
        out.row(a * d + b).setZero();
        out.col(a * d + b).setZero();
      }
  return out;
}

inline double high_sector_mass(const Matrix& m, int d) {
  double mass = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if (a + b >= d) mass += std::abs(m(a * d + b, a * d + b));
  return mass;
}

}  // namespace detail

/// U rho U^dagger. With `truncate` the input is first projected onto total
/// photon number below the cutoff; otherwise weight there is an error.
inline DensityMatrix apply_beamsplitter(const DensityMatrix& rho, double theta, bool truncate = false) {
  detail::require_two_mode(rho);
  const int d = rho.dims()[0].dim;
  Matrix in = rho.matrix();
  if (truncate) {
    in = detail::project_low_sectors(in, d);
  } else {
    detail::require(detail::high_sector_mass(in, d) <= 1e-12, ErrorKind::cutoff_too_small,
                    "state has weight on photon-number sectors beyond the cutoff");
  }
  const Matrix u = beamsplitter_unitary(theta, rho.dims()[0]);
  Matrix out = u * in * u.adjoint();
  out = 0.5 * (out + out.adjoint()).eval();
  return DensityMatrix(rho.dims(), std::move(out), rho.physical() && !truncate, 0.0, false);
}

inline DensityMatrix inverse_beamsplitter(const DensityMatrix& rho, double theta) {
  detail::require_two_mode(rho);
  const int d = rho.dims()[0].dim;
  detail::require(detail::high_sector_mass(rho.matrix(), d) <= 1e-12, ErrorKind::cutoff_too_small,
                  "state has weight on photon-number sectors beyond the cutoff");
  const Matrix u = beamsplitter_unitary(theta, rho.dims()[0]);
  Matrix out = u.adjoint() * rho.matrix() * u;
  out = 0.5 * (out + out.adjoint()).eval();
  return DensityMatrix(rho.dims(), std::move(out), rho.physical(), 0.0, false);
}

/// (|N,0> - |0,N>)/sqrt(2)
inline Vector noon_vector(int big_n, FockDim d) {
  detail::require(big_n >= 1 && big_n < d.dim, ErrorKind::cutoff_too_small, "NOON order must be in [1, cutoff)");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(d.dim) * d.dim);
  v(big_n * d.dim) = 1.0 / std::numbers::sqrt2;
  v(big_n) = -1.0 / std::numbers::sqrt2;
  return v;
}

inline DensityMatrix noon_state(int big_n, FockDim d) { return DensityMatrix::from_pure({d, d}, noon_vector(big_n, d)); }

struct BeamsplitterTerm {
  double weight;
  double theta;
};

struct CorrectionTerm {
  double weight;  // negative
  int j;          // removes |j><j| (x) |N-j><N-j|
};

struct NoonDecomposition {
  int order = 1;  // N
  int n = 1, m = 0;
  double theta0 = 0.0;
  double scale = 1.0;  // n! m! 2^(N-1) / N!
  bool even_route = false;
  std::vector<BeamsplitterTerm> bs_terms;
  std::vector<CorrectionTerm> correction_terms;

  double total_weight() const {
    double s = 0.0;
    for (const auto& t : bs_terms) s += t.weight;
    for (const auto& t : correction_terms) s += t.weight;
    return s;
  }

  /// Photon numbers whose single-mode representations the decomposition uses.
  std::set<int> photon_numbers() const {
    std::set<int> s{n, m};
    for (const auto& c : correction_terms) {
      s.insert(c.j);
      s.insert(order - c.j);
    }
    return s;
  }
};

namespace detail {

inline long double factorial_ld(int k) {
  long double f = 1.0L;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

inline double noon_theta0(int big_n, int m) { return (m % 2 == 0) ? std::numbers::pi / big_n : 0.0; }

}  // namespace detail

/// Phase-cycled decomposition over all N phases for the split (n, N - n).
inline NoonDecomposition noon_decomposition_split(int big_n, int n) {
  detail::require(big_n >= 1, ErrorKind::invalid_argument, "NOON order must be at least 1");
  detail::require(n >= 0 && n <= big_n, ErrorKind::invalid_argument, "split must satisfy 0 <= n <= N");
  NoonDecomposition dec;
  dec.order = big_n;
  dec.n = n;
  dec.m = big_n - n;
  dec.theta0 = detail::noon_theta0(big_n, dec.m);
  const long double scale = detail::factorial_ld(n) * detail::factorial_ld(dec.m) *
                            std::pow(2.0L, big_n - 1) / detail::factorial_ld(big_n);
  dec.scale = static_cast<double>(scale);
  for (int k = 0; k < big_n; ++k)
    dec.bs_terms.push_back({static_cast<double>(scale / big_n), dec.theta0 + 2.0 * std::numbers::pi * k / big_n});
  for (int j = 1; j < big_n; ++j) {
    const double r = r_coefficient(n, dec.m, j);
    if (r == 0.0) continue;
    dec.correction_terms.push_back({-static_cast<double>(scale * static_cast<long double>(r) * r), j});
  }
  return dec;
}

/// Decomposition with the balanced split: the half-period form for even N
/// (N/2 phases, even-index corrections) and the full phase cycle for odd N.
inline NoonDecomposition noon_decomposition(int big_n) {
  detail::require(big_n >= 1, ErrorKind::invalid_argument, "NOON order must be at least 1");
  if (big_n % 2 == 1) return noon_decomposition_split(big_n, (big_n + 1) / 2);
  NoonDecomposition dec;
  dec.order = big_n;
  dec.n = dec.m = big_n / 2;
  dec.even_route = true;
  dec.theta0 = detail::noon_theta0(big_n, dec.m);
  const long double scale = detail::factorial_ld(dec.n) * detail::factorial_ld(dec.m) *
                            std::pow(2.0L, big_n - 1) / detail::factorial_ld(big_n);
  dec.scale = static_cast<double>(scale);
  for (int k = 0; k < big_n / 2; ++k)
    dec.bs_terms.push_back({static_cast<double>(2.0L * scale / big_n), dec.theta0 + 2.0 * std::numbers::pi * k / big_n});
  for (int s = 1; s < big_n / 2; ++s) {
    const double r = r_coefficient(dec.n, dec.m, 2 * s);
    dec.correction_terms.push_back({-static_cast<double>(scale * static_cast<long double>(r) * r), 2 * s});
  }
  return dec;
}

inline DensityMatrix reconstruct(const NoonDecomposition& dec, FockDim d) {
  const Eigen::Index dim = static_cast<Eigen::Index>(d.dim) * d.dim;
  Matrix acc = Matrix::Zero(dim, dim);
  for (const auto& t : dec.bs_terms) {
    Vector v = beamsplitter_vector(dec.n, dec.m, t.theta, d);
    acc += t.weight * (v * v.adjoint());
  }
  for (const auto& c : dec.correction_terms) {
    const Eigen::Index idx = static_cast<Eigen::Index>(c.j) * d.dim + (dec.order - c.j);
    acc(idx, idx) += c.weight;
  }
  return DensityMatrix({d, d}, std::move(acc), false);
}

/// Two-mode probe family member: phase-averaged inputs with magnitudes
/// (alpha_a, alpha_b), either interfered at the beamsplitter with phase theta
/// or used directly as a product state.
struct TwoModeTerm {
  double coefficient;
  double alpha_a;
  double alpha_b;
  double theta;
  bool interfered;
  int family;  // index into bs_terms, or bs_terms.size() + correction index
};

struct TwoModeRepresentation {
  NoonDecomposition decomposition;
  std::vector<TwoModeTerm> terms;
  std::map<int, std::vector<double>> fock_amplitudes;
  std::map<int, std::vector<double>> fock_coefficients;
  double zeta_plus = 0.0;
  double zeta_minus = 0.0;
  double fidelity = 0.0;
  int cutoff = kDefaultCutoff;

  double zeta() const noexcept { return zeta_plus + zeta_minus; }

  RealVector coefficients() const {
    RealVector c(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t k = 0; k < terms.size(); ++k) c(static_cast<Eigen::Index>(k)) = terms[k].coefficient;
    return c;
  }
};

namespace detail {

/// |<Psi_N| U(theta) |a, N-a>|^2
inline double noon_overlap_sq(int big_n, int a, double theta) {
  const int b = big_n - a;
  const cplx top = std::polar(r_coefficient(a, b, big_n), 0.0);
  const cplx bottom = std::polar(r_coefficient(a, b, 0), theta * big_n);
  return std::norm((top - bottom) / std::numbers::sqrt2);
}

}  // namespace detail

/// Flattens the NOON decomposition with single-mode Fock representations into
/// a signed mixture of two-mode phase-averaged coherent probes. The vacuum
/// representation is supplied automatically when absent.
inline TwoModeRepresentation compose_with_fock_representations(const NoonDecomposition& dec,
                                                               std::map<int, Representation> reps) {
  int cutoff = -1;
  for (const auto& [k, r] : reps) {
    detail::require(r.probe_set.kind == ProbeKind::phase_averaged, ErrorKind::invalid_argument,
                    "Fock representations must use phase-averaged probes");
    if (cutoff < 0) cutoff = r.cutoff();
    detail::require(r.cutoff() == cutoff, ErrorKind::dimension_mismatch, "Fock representations differ in cutoff");
  }
  if (cutoff < 0) cutoff = default_cutoff();
  const FockDim d(cutoff);
  if (!reps.count(0)) reps.emplace(0, fock_representation(0, {}, d));
  for (int k : dec.photon_numbers())
    detail::require(reps.count(k) > 0, ErrorKind::invalid_argument,
                    "missing Fock representation for photon number " + std::to_string(k));

  TwoModeRepresentation out;
  out.decomposition = dec;
  out.cutoff = cutoff;
  std::map<int, std::vector<RealVector>> dist;
  for (int k : dec.photon_numbers()) {
    const auto& r = reps.at(k);
    out.fock_amplitudes[k] = r.probe_set.magnitudes();
    out.fock_coefficients[k] = std::vector<double>(r.coefficients.data(), r.coefficients.data() + r.coefficients.size());
    for (const auto& p : r.probe_set.probes) dist[k].push_back(p.diagonal());
  }
  const int big_n = dec.order;
  double fid = 0.0;
  for (std::size_t f = 0; f < dec.bs_terms.size(); ++f) {
    const auto& t = dec.bs_terms[f];
    std::vector<double> overlap(big_n + 1);
    for (int a = 0; a <= big_n; ++a) overlap[a] = detail::noon_overlap_sq(big_n, a, t.theta);
    const auto& ca = out.fock_coefficients[dec.n];
    const auto& cb = out.fock_coefficients[dec.m];
    for (std::size_t i = 0; i < ca.size(); ++i) {
      for (std::size_t j = 0; j < cb.size(); ++j) {
        const double coeff = t.weight * ca[i] * cb[j];
        out.terms.push_back({coeff, out.fock_amplitudes[dec.n][i], out.fock_amplitudes[dec.m][j], t.theta, true,
                             static_cast<int>(f)});
        double p = 0.0;
        for (int a = 0; a <= big_n; ++a) {
          if (a >= cutoff || big_n - a >= cutoff) continue;
          p += dist[dec.n][i](a) * dist[dec.m][j](big_n - a) * overlap[a];
        }
        fid += coeff * p;
      }
    }
  }
  for (std::size_t f = 0; f < dec.correction_terms.size(); ++f) {
    const auto& t = dec.correction_terms[f];
    const int ja = t.j, jb = big_n - t.j;
    const auto& ca = out.fock_coefficients[ja];
    const auto& cb = out.fock_coefficients[jb];
    for (std::size_t i = 0; i < ca.size(); ++i) {
      for (std::size_t k = 0; k < cb.size(); ++k) {
        const double coeff = t.weight * ca[i] * cb[k];
        out.terms.push_back({coeff, out.fock_amplitudes[ja][i], out.fock_amplitudes[jb][k], 0.0, false,
                             static_cast<int>(dec.bs_terms.size() + f)});
        const auto& pa = dist[ja][i];
        const auto& pb = dist[jb][k];
        const double p = 0.5 * (pa(big_n) * pb(0) + pa(0) * pb(big_n));
        fid += coeff * p;
      }
    }
  }
  std::tie(out.zeta_plus, out.zeta_minus) = zeta_split(out.coefficients());
  out.fidelity = std::clamp(fid, 0.0, 1.0);
  return out;
}

/// Fock representations used for NOON composition up to order N. Photon
/// numbers above two use the default grid for that number.
inline std::map<int, Representation> noon_fock_representations(int big_n, FockDim d,
                                                                const std::vector<double>& one_photon = single_photon_amplitudes(),
                                                                const std::vector<double>& two_photon = noon_two_photon_amplitudes()) {
  const auto dec = noon_decomposition(big_n);
  std::map<int, Representation> reps;
  for (int k : dec.photon_numbers()) {
    if (k == 0) continue;
    const std::vector<double> grid = k == 1 ? one_photon : k == 2 ? two_photon : default_fock_amplitudes(k);
    reps.emplace(k, fock_representation(k, grid, d));
  }
  return reps;
}

/// Dense two-mode reconstruction at cutoff d. Inputs are projected onto total
/// photon number below d before interfering, which keeps every sector below
/// d exact.
inline DensityMatrix reconstruct_two_mode(const TwoModeRepresentation& rep, FockDim d) {
  const Eigen::Index dim = static_cast<Eigen::Index>(d.dim) * d.dim;
  Matrix acc = Matrix::Zero(dim, dim);
  std::map<double, Matrix> unitaries;
  for (const auto& t : rep.terms) {
    DensityMatrix prod = tensor_product(phase_averaged(t.alpha_a, d), phase_averaged(t.alpha_b, d));
    if (t.interfered) {
      auto it = unitaries.find(t.theta);
      if (it == unitaries.end()) it = unitaries.emplace(t.theta, beamsplitter_unitary(t.theta, d)).first;
      Matrix in = detail::project_low_sectors(prod.matrix(), d.dim);
      acc += t.coefficient * (it->second * in * it->second.adjoint());
    } else {
      acc += t.coefficient * prod.matrix();
    }
  }
  acc = 0.5 * (acc + acc.adjoint()).eval();
  return DensityMatrix({d, d}, std::move(acc), false);
}

struct TwoModeProbe {
  std::size_t term = 0;
  int sign = 1;
  double alpha_a = 0.0, alpha_b = 0.0;
  double phi1 = 0.0, phi2 = 0.0, theta = 0.0;
  bool interfered = true;
  cplx out_a, out_b;
};

/// Output coherent amplitudes for inputs a e^{i phi1}, b e^{i phi2}.
inline std::pair<cplx, cplx> beamsplitter_outputs(double a, double b, double phi1, double phi2, double theta) {
  const cplx x = std::polar(a, phi1), y = std::polar(b, phi2);
  return {(x + y) / std::numbers::sqrt2, std::polar(1.0, theta) * (x - y) / std::numbers::sqrt2};
}

inline TwoModeProbe sample_two_mode_probe(const TwoModeRepresentation& rep, const SignedMixture& mix, Engine& e) {
  const SignedDraw draw = sample_signed(mix, e);
  const TwoModeTerm& t = rep.terms[draw.index];
  TwoModeProbe p;
  p.term = draw.index;
  p.sign = draw.sign;
  p.alpha_a = t.alpha_a;
  p.alpha_b = t.alpha_b;
  p.phi1 = uniform_phase(e);
  p.phi2 = uniform_phase(e);
  p.theta = t.theta;
  p.interfered = t.interfered;
  if (t.interfered) {
    std::tie(p.out_a, p.out_b) = beamsplitter_outputs(t.alpha_a, t.alpha_b, p.phi1, p.phi2, t.theta);
  } else {
    p.out_a = std::polar(t.alpha_a, p.phi1);
    p.out_b = std::polar(t.alpha_b, p.phi2);
  }
  return p;
}

}  // namespace cse_lab
