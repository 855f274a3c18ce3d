#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "error.hpp"
#include "fock.hpp"

namespace cse_lab {

enum class ProbeKind { phase_averaged, coherent, generic };

inline const char* to_string(ProbeKind k) noexcept {
  switch (k) {
    case ProbeKind::phase_averaged: return "phase_averaged";
    case ProbeKind::coherent: return "coherent";
    case ProbeKind::generic: return "generic";
  }
  return "generic";
}

inline std::string format_amplitude(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

struct ProbeSet {
  std::vector<DensityMatrix> probes;
  std::vector<std::string> labels;
  std::vector<cplx> amplitudes;  // empty for generic probes
  ProbeKind kind = ProbeKind::generic;

  std::size_t size() const noexcept { return probes.size(); }
  const Dims& dims() const { return probes.front().dims(); }

  void validate() const {
    detail::require(!probes.empty(), ErrorKind::invalid_argument, "probe set is empty");
    detail::require(labels.size() == probes.size(), ErrorKind::invalid_argument,
                    "probe labels and probes differ in count");
    detail::require(kind == ProbeKind::generic || amplitudes.size() == probes.size(),
                    ErrorKind::invalid_argument, "probe amplitudes missing");
    for (const auto& p : probes) {
      detail::require(p.physical(), ErrorKind::non_physical, "probe states must be physical");
      detail::require(p.dims() == probes.front().dims(), ErrorKind::dimension_mismatch,
                      "probe dimensions differ");
    }
  }

  std::vector<double> magnitudes() const {
    std::vector<double> out;
    for (auto a : amplitudes) out.push_back(std::abs(a));
    return out;
  }

  static ProbeSet phase_averaged(const std::vector<double>& amps, FockDim d) {
    ProbeSet s;
    s.kind = ProbeKind::phase_averaged;
    for (double a : amps) {
      s.probes.push_back(cse_lab::phase_averaged(a, d));
      s.labels.push_back(format_amplitude(a));
      s.amplitudes.emplace_back(a, 0.0);
    }
    s.validate();
    return s;
  }

  static ProbeSet coherent(const std::vector<cplx>& amps, FockDim d) {
    ProbeSet s;
    s.kind = ProbeKind::coherent;
    for (cplx a : amps) {
      s.probes.push_back(coherent_state(CoherentAmplitude::from_complex(a), d));
      std::ostringstream os;
      os << std::setprecision(6) << a.real() << (a.imag() < 0 ? "" : "+") << a.imag() << "i";
      s.labels.push_back(os.str());
      s.amplitudes.push_back(a);
    }
    s.validate();
    return s;
  }

  static ProbeSet generic(std::vector<DensityMatrix> states, std::vector<std::string> names = {}) {
    ProbeSet s;
    s.probes = std::move(states);
    if (names.empty()) {
      for (std::size_t j = 0; j < s.probes.size(); ++j) names.push_back("probe" + std::to_string(j));
    }
    s.labels = std::move(names);
    s.validate();
    return s;
  }
};

struct Representation {
  ProbeSet probe_set;
  RealVector coefficients;
  double zeta_plus = 0.0;
  double zeta_minus = 0.0;
  double fidelity = 0.0;
  DensityMatrix target;
  double psd_tolerance = 1e-8;
  std::vector<std::string> warnings;

  double zeta() const noexcept { return zeta_plus + zeta_minus; }
  int cutoff() const { return probe_set.dims().front().dim; }
};

inline std::pair<double, double> zeta_split(const RealVector& c) {
  double zp = 0.0, zm = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (c(j) > 0) zp += c(j);
    else zm -= c(j);
  }
  return {zp, zm};
}

inline DensityMatrix reconstruct(const ProbeSet& probes, const RealVector& c, double psd_tol = 1e-8) {
  return linear_combination(probes.probes, c, psd_tol);
}

inline DensityMatrix reconstruct(const Representation& rep) {
  return reconstruct(rep.probe_set, rep.coefficients, rep.psd_tolerance);
}

namespace detail {

/// Pure target vector when the state is rank one, otherwise empty.
inline std::optional<Vector> pure_vector(const DensityMatrix& target) {
  if (target.is_diagonal()) {
    RealVector d = target.diagonal();
    Eigen::Index k;
    if (d.maxCoeff(&k) >= 1.0 - 1e-12) {
      Vector v = Vector::Zero(d.size());
      v(k) = 1.0;
      return v;
    }
    return std::nullopt;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(target.matrix());
  const auto n = es.eigenvalues().size();
  if (es.eigenvalues()(n - 1) >= 1.0 - 1e-10) return Vector(es.eigenvectors().col(n - 1));
  return std::nullopt;
}

inline double representation_fidelity(const DensityMatrix& target, const DensityMatrix& rho, double psd_tol) {
  if (auto psi = pure_vector(target)) return fidelity_pure(*psi, rho);
  return fidelity(rho, target, psd_tol);
}

}  // namespace detail

/// Builds a representation from given coefficients, filling zeta and fidelity.
inline Representation make_representation(ProbeSet probes, RealVector c, DensityMatrix target,
                                          double psd_tol = 1e-8) {
  probes.validate();
  detail::require(c.size() == static_cast<Eigen::Index>(probes.size()), ErrorKind::dimension_mismatch,
                  "coefficient count differs from probe count");
  detail::require(std::abs(c.sum() - 1.0) <= 1e-9, ErrorKind::invalid_argument,
                  "coefficients must sum to one");
  detail::require_same_dims(probes.dims(), target.dims(), "representation");
  Representation rep;
  rep.probe_set = std::move(probes);
  rep.coefficients = std::move(c);
  std::tie(rep.zeta_plus, rep.zeta_minus) = zeta_split(rep.coefficients);
  rep.target = std::move(target);
  rep.psd_tolerance = psd_tol;
  DensityMatrix rho = reconstruct(rep);
  rep.fidelity = detail::representation_fidelity(rep.target, rho, psd_tol);
  if (!rho.physical()) rep.warnings.push_back("reconstructed operator is not positive semidefinite");
  return rep;
}

struct SolverOptions {
  /// Allowed negative eigenvalue of the reconstruction outside the target support.
  double psd_tolerance = 1e-8;
  /// Barrier duality-gap target (constraint count divided by the barrier weight).
  double gap_tolerance = 1e-11;
  double barrier_growth = 20.0;
  int max_newton = 200;
  int max_outer = 80;
};

namespace detail {

/// Orthonormal basis of {y : sum(y) = 0} in R^J.
inline Eigen::MatrixXd affine_null_basis(Eigen::Index j) {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(j, 1) / std::sqrt(static_cast<double>(j));
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(j, j);
  return q.rightCols(j - 1);
}

/// Interior-point state shared by the diagonal and general solvers. The
/// concrete problem supplies value/gradient/Hessian of the centering function
/// in affine coordinates and a strict-feasibility test.
template <class Problem>
RealVector barrier_solve(Problem& prob, Eigen::Index j, const SolverOptions& opt) {
  const Eigen::MatrixXd z = affine_null_basis(j);
  const RealVector c0 = RealVector::Constant(j, 1.0 / static_cast<double>(j));
  RealVector y = RealVector::Zero(j - 1);
  auto coeffs = [&](const RealVector& yy) { RealVector c = c0 + z * yy; return c; };
  detail::require(prob.feasible(coeffs(y)), ErrorKind::infeasible,
                  "uniform probe mixture is not strictly feasible");
  const double m = static_cast<double>(prob.constraint_count());
  double t = 1.0;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    for (int it = 0;; ++it) {
      if (it >= opt.max_newton) {
        throw Error(ErrorKind::not_converged, "barrier centering did not converge");
      }
      RealVector c = coeffs(y);
      RealVector gc;
      Eigen::MatrixXd hc;
      prob.derivatives(c, t, gc, hc);
      RealVector gy = z.transpose() * gc;
      Eigen::MatrixXd hy = z.transpose() * hc * z;
      hy = 0.5 * (hy + hy.transpose()).eval();
      // Pseudo-inverse over the numerically positive spectrum keeps the step
      // a descent direction when the Hessian is badly conditioned.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hy);
      const RealVector& lam = es.eigenvalues();
      const double floor = 1e-14 * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
      RealVector gq = es.eigenvectors().transpose() * gy;
      for (Eigen::Index k = 0; k < gq.size(); ++k) gq(k) = lam(k) > floor ? gq(k) / lam(k) : 0.0;
      RealVector dy = -(es.eigenvectors() * gq);
      const double decrement = -gy.dot(dy);
      if (!(decrement >= 0.0) || !std::isfinite(decrement)) {
        throw Error(ErrorKind::numerical, "barrier Newton step is not a descent direction");
      }
      if (decrement <= 1e-10) break;
      const double f0 = prob.value(c, t);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 80; ++ls, step *= 0.5) {
        RealVector yn = y + step * dy;
        RealVector cn = coeffs(yn);
        if (!prob.feasible(cn)) continue;
        const double fn = prob.value(cn, t);
        if (fn <= f0 - 0.25 * step * decrement) {
          moved = (yn - y).cwiseAbs().maxCoeff() > 0.0;
          y = yn;
          break;
        }
      }
      if (!moved) break;
    }
    if (m / t < opt.gap_tolerance) return coeffs(y);
    t *= opt.barrier_growth;
  }
  throw Error(ErrorKind::not_converged, "barrier method exceeded its outer iteration limit");
}

/// Targets and probes diagonal in the Fock basis: positivity is per level.
struct DiagonalProblem {
  Eigen::MatrixXd p;  // levels x probes, only rows that vary with c
  RealVector tau;
  RealVector sqrt_target;  // empty when the objective is linear
  RealVector linear;       // objective weights on probe coefficients

  Eigen::Index constraint_count() const { return p.rows(); }

  bool feasible(const RealVector& c) const {
    RealVector s = p * c + tau;
    return (s.array() > 0.0).all();
  }

  double objective(const RealVector& c) const {
    if (sqrt_target.size() == 0) return linear.dot(c);
    RealVector q = p * c;
    double g = 0.0;
    for (Eigen::Index n = 0; n < q.size(); ++n)
      if (sqrt_target(n) > 0.0) g += sqrt_target(n) * std::sqrt(std::max(q(n), 0.0));
    return g;
  }

  double value(const RealVector& c, double t) const {
    RealVector s = p * c + tau;
    return -t * objective(c) - s.array().log().sum();
  }

  void derivatives(const RealVector& c, double t, RealVector& g, Eigen::MatrixXd& h) const {
    RealVector s = p * c + tau;
    RealVector inv = s.cwiseInverse();
    g = -p.transpose() * inv;
    Eigen::MatrixXd w = inv.asDiagonal() * p;
    h = w.transpose() * w;
    if (sqrt_target.size() == 0) {
      g -= t * linear;
      return;
    }
    RealVector q = p * c;
    RealVector d1 = RealVector::Zero(q.size()), d2 = RealVector::Zero(q.size());
    for (Eigen::Index n = 0; n < q.size(); ++n) {
      if (sqrt_target(n) <= 0.0) continue;
      const double r = std::sqrt(q(n));
      d1(n) = 0.5 * sqrt_target(n) / r;
      d2(n) = 0.25 * sqrt_target(n) / (r * q(n));
    }
    g -= t * (p.transpose() * d1);
    Eigen::MatrixXd wt = d2.cwiseSqrt().asDiagonal() * p;
    h += t * (wt.transpose() * wt);
  }
};

/// General case: log-det barrier on rho(c) + tau I.
struct GeneralProblem {
  std::vector<Matrix> ops;
  double tau = 0.0;
  std::optional<Vector> psi;
  Matrix sqrt_target;
  Eigen::Index dim = 0;

  Eigen::Index constraint_count() const { return dim; }

  Matrix shifted(const RealVector& c) const {
    Matrix x = tau * Matrix::Identity(dim, dim);
    for (std::size_t j = 0; j < ops.size(); ++j) x += c(static_cast<Eigen::Index>(j)) * ops[j];
    return 0.5 * (x + x.adjoint());
  }

  bool feasible(const RealVector& c) const {
    Eigen::LLT<Matrix> llt(shifted(c));
    return llt.info() == Eigen::Success;
  }

  double objective(const RealVector& c) const {
    Matrix rho = shifted(c) - tau * Matrix::Identity(dim, dim);
    if (psi) return (psi->adjoint() * rho * *psi)(0, 0).real();
    Matrix inner = sqrt_target * rho * sqrt_target;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  }

  double value(const RealVector& c, double t) const {
    Eigen::LLT<Matrix> llt(shifted(c));
    const double logdet = 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
    return -t * objective(c) - logdet;
  }

  RealVector objective_gradient(const RealVector& c) const {
    const auto j = static_cast<Eigen::Index>(ops.size());
    RealVector g(j);
    if (psi) {
      for (Eigen::Index k = 0; k < j; ++k) g(k) = (psi->adjoint() * ops[k] * *psi)(0, 0).real();
      return g;
    }
    Matrix rho = shifted(c) - tau * Matrix::Identity(dim, dim);
    Matrix inner = sqrt_target * rho * sqrt_target;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.adjoint()));
    RealVector ev = es.eigenvalues();
    const double floor = 1e-14 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    RealVector w(ev.size());
    for (Eigen::Index k = 0; k < ev.size(); ++k) w(k) = ev(k) > floor ? 0.5 / std::sqrt(ev(k)) : 0.0;
    Matrix gm = sqrt_target * es.eigenvectors() * w.cast<cplx>().asDiagonal() *
                es.eigenvectors().adjoint() * sqrt_target;
    for (Eigen::Index k = 0; k < j; ++k) g(k) = trace_product(gm, ops[k]);
    return g;
  }

  void derivatives(const RealVector& c, double t, RealVector& g, Eigen::MatrixXd& h) const {
    const auto j = static_cast<Eigen::Index>(ops.size());
    Matrix xinv = shifted(c).llt().solve(Matrix::Identity(dim, dim));
    std::vector<Matrix> xo(ops.size());
    g.resize(j);
    for (Eigen::Index k = 0; k < j; ++k) {
      xo[k] = xinv * ops[k];
      g(k) = -xo[k].trace().real();
    }
    h.resize(j, j);
    for (Eigen::Index a = 0; a < j; ++a)
      for (Eigen::Index b = a; b < j; ++b) h(a, b) = h(b, a) = trace_product(xo[a], xo[b]);
    g -= t * objective_gradient(c);
    if (psi) return;
    // Mixed targets: finite-difference curvature of the concave root fidelity.
    Eigen::MatrixXd hg(j, j);
    const double step = 1e-6;
    for (Eigen::Index k = 0; k < j; ++k) {
      RealVector cp = c, cm = c;
      cp(k) += step;
      cm(k) -= step;
      hg.col(k) = (objective_gradient(cp) - objective_gradient(cm)) / (2.0 * step);
    }
    hg = -0.5 * (hg + hg.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hg);
    RealVector ev = es.eigenvalues().cwiseMax(0.0);
    h += t * (es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  }
};

inline bool operators_independent(const ProbeSet& probes) {
  const auto n = probes.probes.front().size();
  Eigen::MatrixXcd v(n * n, static_cast<Eigen::Index>(probes.size()));
  for (std::size_t j = 0; j < probes.size(); ++j)
    v.col(static_cast<Eigen::Index>(j)) = probes.probes[j].matrix().reshaped();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(v);
  qr.setThreshold(1e-12);
  return qr.rank() == v.cols();
}

}  // namespace detail

/// Maximizes the fidelity of sum_j c_j rho_j to the target over the affine set
/// sum_j c_j = 1 with the reconstruction positive semidefinite (within the
/// configured tolerance). Deterministic for fixed inputs and options.
inline Representation solve_representation(const DensityMatrix& target, const ProbeSet& probes,
                                           const SolverOptions& opt) {
  probes.validate();
  detail::require_same_dims(target.dims(), probes.dims(), "solve_representation");
  detail::require(target.physical(), ErrorKind::non_physical, "target must be a physical state");
  const auto j = static_cast<Eigen::Index>(probes.size());
  std::vector<std::string> warnings;
  if (j > 1 && !detail::operators_independent(probes))
    warnings.push_back("probe operators are linearly dependent; coefficients are not unique");

  RealVector c;
  if (j == 1) {
    c = RealVector::Ones(1);
  } else {
    bool diagonal = target.is_diagonal();
    for (const auto& p : probes.probes) diagonal = diagonal && p.is_diagonal();
    if (diagonal) {
      const auto levels = target.size();
      Eigen::MatrixXd pfull(levels, j);
      for (Eigen::Index k = 0; k < j; ++k) pfull.col(k) = probes.probes[k].diagonal();
      RealVector t = target.diagonal().cwiseMax(0.0);
      std::vector<Eigen::Index> rows;
      for (Eigen::Index n = 0; n < levels; ++n)
        if (pfull.row(n).cwiseAbs().maxCoeff() > 0.0) rows.push_back(n);
      detail::DiagonalProblem prob;
      prob.p.resize(static_cast<Eigen::Index>(rows.size()), j);
      prob.tau.resize(prob.p.rows());
      RealVector tr(prob.p.rows());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        prob.p.row(ri) = pfull.row(rows[r]);
        tr(ri) = t(rows[r]);
        prob.tau(ri) = t(rows[r]) > 0.0 ? 0.0 : opt.psd_tolerance;
      }
      detail::require(tr.sum() > 0.0, ErrorKind::infeasible,
                      "no probe has weight on the target support");
      if (auto psi = detail::pure_vector(target)) {
        Eigen::Index k;
        psi->cwiseAbs().maxCoeff(&k);
        prob.linear = pfull.row(k).transpose();
      } else {
        prob.sqrt_target = tr.cwiseSqrt();
      }
      c = detail::barrier_solve(prob, j, opt);
    } else {
      detail::GeneralProblem prob;
      prob.dim = target.size();
      prob.tau = opt.psd_tolerance;
      for (const auto& p : probes.probes) prob.ops.push_back(p.matrix());
      prob.psi = detail::pure_vector(target);
      if (!prob.psi) prob.sqrt_target = detail::hermitian_sqrt(target.matrix(), kPsdTolerance).root;
      c = detail::barrier_solve(prob, j, opt);
    }
    c(j - 1) = 1.0 - (c.sum() - c(j - 1));
  }
  Representation rep = make_representation(probes, c, target, opt.psd_tolerance);
  rep.warnings.insert(rep.warnings.begin(), warnings.begin(), warnings.end());
  return rep;
}

inline Representation solve_representation(const DensityMatrix& target, const ProbeSet& probes,
                                           double tol = 1e-8) {
  SolverOptions opt;
  opt.psd_tolerance = tol;
  return solve_representation(target, probes, opt);
}

inline std::vector<double> single_photon_amplitudes() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

inline std::vector<double> even_grid(double top, int count) {
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(top * k / (count - 1));
  return out;
}

inline std::vector<double> two_photon_amplitudes() { return even_grid(1.5, 7); }

/// Two-photon grid used when composing NOON representations; wider than the
/// stand-alone grid, trading fidelity for a smaller coefficient norm.
inline std::vector<double> noon_two_photon_amplitudes() { return even_grid(2.0, 7); }

/// Default probe grid for |n>: the fixed grids for n <= 2, an even grid
/// widening with n otherwise.
inline std::vector<double> default_fock_amplitudes(int n) {
  if (n == 0) return {0.0};
  if (n == 1) return single_photon_amplitudes();
  if (n == 2) return two_photon_amplitudes();
  return even_grid(1.0 + 0.25 * n, 2 * n + 3);
}

/// Representation of |n><n| by phase-averaged coherent probes; n = 0 is the vacuum probe alone.
inline Representation fock_representation(int n, const std::vector<double>& amps, FockDim d,
                                          double tol = 1e-8) {
  detail::require(n >= 0, ErrorKind::invalid_argument, "photon number must be nonnegative");
  if (n == 0) {
    return make_representation(ProbeSet::phase_averaged({0.0}, d), RealVector::Ones(1),
                               DensityMatrix::fock(0, d), tol);
  }
  return solve_representation(DensityMatrix::fock(n, d), ProbeSet::phase_averaged(amps, d), tol);
}

struct RefinedProbes {
  std::vector<double> amplitudes;
  Representation representation;
  int sweeps = 0;
};

/// Coordinate search over nonzero amplitudes (each within its neighbours)
/// until the fidelity reaches the floor or sweeps run out.
inline RefinedProbes refine_probe_amplitudes(const DensityMatrix& target, std::vector<double> amps, FockDim d,
                                             double fidelity_floor, int max_sweeps = 4, double tol = 1e-8) {
  auto fid = [&](const std::vector<double>& a) {
    try {
      return solve_representation(target, ProbeSet::phase_averaged(a, d), tol).fidelity;
    } catch (const Error&) {
      return 0.0;
    }
  };
  RefinedProbes out;
  out.representation = solve_representation(target, ProbeSet::phase_averaged(amps, d), tol);
  for (; out.sweeps < max_sweeps && out.representation.fidelity < fidelity_floor; ++out.sweeps) {
    for (std::size_t k = 0; k < amps.size(); ++k) {
      if (amps[k] == 0.0) continue;
      const double lo = k > 0 ? amps[k - 1] + 1e-3 : 1e-3;
      const double hi = k + 1 < amps.size() ? amps[k + 1] - 1e-3 : amps[k] * 1.5;
      if (hi <= lo) continue;
      auto neg = [&](double x) {
        auto trial = amps;
        trial[k] = x;
        return -fid(trial);
      };
      auto best = boost::math::tools::brent_find_minima(neg, lo, hi, 30);
      if (-best.second > fid(amps)) amps[k] = best.first;
    }
    out.representation = solve_representation(target, ProbeSet::phase_averaged(amps, d), tol);
  }
  out.amplitudes = amps;
  return out;
}

inline double systematic_error_bound(double fidelity_value, double eigenbound) {
  detail::require(fidelity_value >= 0.0 && fidelity_value <= 1.0, ErrorKind::invalid_argument,
                  "fidelity must lie in [0, 1]");
  detail::require(eigenbound >= 0.0, ErrorKind::invalid_argument, "eigenvalue bound must be nonnegative");
  return 2.0 * eigenbound * std::sqrt(1.0 - fidelity_value);
}

struct ObservableFit {
  RealVector coefficients;
  RealVector fitted;  // diagonal of sum_m z_m Pi_m on the fit basis
  Eigen::Index rank = 0;
  double residual = 0.0;
  std::vector<std::string> warnings;
};

/// Least-squares fit of a diagonal observable onto diagonal POVM elements over
/// the levels supplied. Rank-deficient designs return the minimum-norm solution.
inline ObservableFit approximate_observable(const RealVector& target, const std::vector<RealVector>& povm) {
  detail::require(!povm.empty(), ErrorKind::invalid_argument, "POVM is empty");
  const auto levels = target.size();
  Eigen::MatrixXd x(levels, static_cast<Eigen::Index>(povm.size()));
  for (std::size_t m = 0; m < povm.size(); ++m) {
    detail::require(povm[m].size() == levels, ErrorKind::dimension_mismatch, "POVM element size mismatch");
    x.col(static_cast<Eigen::Index>(m)) = povm[m];
  }
  detail::require((x.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-8, ErrorKind::invalid_argument,
                  "POVM elements do not sum to the identity");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  ObservableFit fit;
  fit.rank = cod.rank();
  if (fit.rank < x.cols()) fit.warnings.push_back("rank-deficient POVM design; minimum-norm fit returned");
  fit.coefficients = cod.solve(target);
  fit.fitted = x * fit.coefficients;
  fit.residual = (fit.fitted - target).squaredNorm();
  return fit;
}

inline ObservableFit approximate_observable(const Observable& target, const std::vector<Observable>& povm) {
  detail::require(target.is_diagonal(), ErrorKind::invalid_argument, "observable fit expects diagonal operators");
  std::vector<RealVector> diag;
  for (const auto& p : povm) {
    detail::require(p.is_diagonal(), ErrorKind::invalid_argument, "observable fit expects diagonal POVM");
    detail::require_same_dims(p.dims(), target.dims(), "approximate_observable");
    diag.push_back(p.diagonal_values());
  }
  return approximate_observable(target.diagonal_values(), diag);
}

/// <alpha_j| [a, rho - rho_true] |alpha_j> for every coherent probe. Vanishing
/// entries mark stationary probe amplitudes of Tr (rho - rho_true)^2.
inline std::vector<cplx> optimality_residual(const Representation& rep) {
  detail::require(rep.probe_set.kind == ProbeKind::coherent, ErrorKind::invalid_argument,
                  "optimality residual needs pure coherent probes");
  detail::require(rep.probe_set.dims().size() == 1, ErrorKind::invalid_argument,
                  "optimality residual is single-mode");
  const FockDim d = rep.probe_set.dims().front();
  Matrix delta = -rep.target.matrix();
  for (std::size_t j = 0; j < rep.probe_set.size(); ++j)
    delta += rep.coefficients(static_cast<Eigen::Index>(j)) * rep.probe_set.probes[j].matrix();
  const Matrix a = annihilation(d);
  const Matrix comm = a * delta - delta * a;
  std::vector<cplx> out;
  for (cplx alpha : rep.probe_set.amplitudes) {
    Vector v = coherent_vector(alpha, d);
    out.push_back((v.adjoint() * comm * v)(0, 0));
  }
  return out;
}

}  // namespace cse_lab
