#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstdlib>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <boost/math/special_functions/gamma.hpp>

#include "error.hpp"

namespace cse_lab {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr int kDefaultCutoff = 30;
inline constexpr double kTailTolerance = 1e-10;
inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kTraceTolerance = 1e-10;
inline constexpr double kPsdTolerance = 1e-10;

/// Per-mode cutoff, honouring CSE_LAB_DEFAULT_CUTOFF when it holds a valid value.
inline int default_cutoff() {
  if (const char* env = std::getenv("CSE_LAB_DEFAULT_CUTOFF")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 2 && v <= 4096) return static_cast<int>(v);
  }
  return kDefaultCutoff;
}

struct FockDim {
  int dim;

  explicit FockDim(int d = default_cutoff()) : dim(d) {
    detail::require(d >= 2, ErrorKind::invalid_argument,
                    "Fock cutoff must be at least 2, got " + std::to_string(d));
  }

  friend bool operator==(const FockDim&, const FockDim&) = default;
};

using Dims = std::vector<FockDim>;

inline Eigen::Index total_dim(const Dims& dims) {
  Eigen::Index n = 1;
  for (const auto& d : dims) n *= d.dim;
  return n;
}

/// Hermitian operator on one or two truncated modes. Two-mode index is a * d_b + b.
/// Physical states are trace one and positive semidefinite; signed combinations
/// such as rho - rho_true carry physical() == false.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  DensityMatrix(Dims dims, Matrix entries, bool physical = true, double discarded_mass = 0.0, bool check_psd = true)
      : dims_(std::move(dims)),
        m_(std::move(entries)),
        physical_(physical),
        discarded_mass_(discarded_mass) {
    detail::require(!dims_.empty() && dims_.size() <= 2, ErrorKind::invalid_argument,
                    "density matrices cover one or two modes");
    const auto n = total_dim(dims_);
    detail::require(m_.rows() == n && m_.cols() == n, ErrorKind::dimension_mismatch,
                    "matrix size does not match mode dimensions");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    detail::require((m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= kHermitianTolerance * scale,
                    ErrorKind::non_physical, "operator is not Hermitian");
    if (physical_) {
      detail::require(std::abs(trace() - 1.0) <= kTraceTolerance, ErrorKind::non_physical,
                      "state trace deviates from 1");
      if (check_psd) {
        const double lo = min_eigenvalue();
        detail::require(lo >= -kPsdTolerance, ErrorKind::non_physical,
                        "negative eigenvalue " + std::to_string(lo) + " in a physical state");
      }
    }
  }

  /// Physical state whose positivity the caller guarantees (pure states,
  /// tensor products, unitary images); skips the eigenvalue check.
  static DensityMatrix assume_psd(Dims dims, Matrix entries, double discarded_mass = 0.0) {
    return DensityMatrix(std::move(dims), std::move(entries), true, discarded_mass, false);
  }

  static DensityMatrix from_pure(const Dims& dims, const Vector& psi) {
    Vector v = psi / psi.norm();
    return assume_psd(dims, v * v.adjoint());
  }

  static DensityMatrix from_diagonal(const Dims& dims, const RealVector& diag, bool physical = true) {
    Matrix m = Matrix::Zero(diag.size(), diag.size());
    m.diagonal() = diag.cast<cplx>();
    return DensityMatrix(dims, std::move(m), physical);
  }

  static DensityMatrix fock(int n, FockDim d) {
    detail::require(n >= 0 && n < d.dim, ErrorKind::cutoff_too_small,
                    "Fock level " + std::to_string(n) + " outside cutoff");
    RealVector diag = RealVector::Zero(d.dim);
    diag(n) = 1.0;
    return from_diagonal({d}, diag);
  }

  const Dims& dims() const noexcept { return dims_; }
  int modes() const noexcept { return static_cast<int>(dims_.size()); }
  Eigen::Index size() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  bool physical() const noexcept { return physical_; }
  double discarded_mass() const noexcept { return discarded_mass_; }
  double trace() const { return m_.trace().real(); }

  RealVector diagonal() const { return m_.diagonal().real(); }

  bool is_diagonal(double tol = 1e-14) const {
    Matrix off = m_;
    off.diagonal().setZero();
    return off.size() == 0 || off.cwiseAbs().maxCoeff() <= tol;
  }

  double min_eigenvalue() const {
    if (is_diagonal()) return diagonal().minCoeff();
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Marks the operator as signed; used for differences and affine combinations.
  DensityMatrix as_signed() const {
    DensityMatrix out = *this;
    out.physical_ = false;
    return out;
  }

 private:
  Dims dims_;
  Matrix m_;
  bool physical_ = true;
  double discarded_mass_ = 0.0;
};

class Observable {
 public:
  Observable() = default;

  /// The eigenvalue bound is computed from the spectrum when not supplied.
  Observable(Dims dims, Matrix entries, double eigenbound = -1.0)
      : dims_(std::move(dims)), m_(std::move(entries)) {
    const auto n = total_dim(dims_);
    detail::require(m_.rows() == n && m_.cols() == n, ErrorKind::dimension_mismatch,
                    "observable size does not match mode dimensions");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    detail::require((m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= kHermitianTolerance * scale,
                    ErrorKind::non_physical, "observable is not Hermitian");
    const double spectral = spectral_radius();
    if (eigenbound < 0.0) {
      bound_ = spectral;
    } else {
      detail::require(spectral <= eigenbound * (1.0 + 1e-12) + 1e-12, ErrorKind::invalid_argument,
                      "declared eigenvalue bound is smaller than the spectrum");
      bound_ = eigenbound;
    }
  }

  static Observable diagonal(const Dims& dims, const RealVector& values) {
    Matrix m = Matrix::Zero(values.size(), values.size());
    m.diagonal() = values.cast<cplx>();
    return Observable(dims, std::move(m));
  }

  static Observable identity(const Dims& dims) {
    return diagonal(dims, RealVector::Ones(total_dim(dims)));
  }

  const Dims& dims() const noexcept { return dims_; }
  const Matrix& matrix() const noexcept { return m_; }
  double eigenbound() const noexcept { return bound_; }

  bool is_diagonal() const {
    Matrix off = m_;
    off.diagonal().setZero();
    return off.size() == 0 || off.cwiseAbs().maxCoeff() == 0.0;
  }

  RealVector diagonal_values() const { return m_.diagonal().real(); }

  Observable squared() const { return Observable(dims_, m_ * m_, bound_ * bound_); }

 private:
  double spectral_radius() const {
    if (is_diagonal()) return m_.diagonal().cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  Dims dims_;
  Matrix m_;
  double bound_ = 0.0;
};

struct CoherentAmplitude {
  double magnitude = 0.0;
  double phase = 0.0;

  CoherentAmplitude() = default;
  CoherentAmplitude(double mag, double ph = 0.0) : magnitude(mag), phase(wrap(ph)) {
    detail::require(mag >= 0.0 && std::isfinite(mag), ErrorKind::invalid_argument,
                    "coherent amplitude magnitude must be finite and nonnegative");
  }

  static CoherentAmplitude from_complex(cplx a) { return {std::abs(a), std::arg(a)}; }
  cplx value() const { return std::polar(magnitude, phase); }

 private:
  static double wrap(double ph) {
    double w = std::fmod(ph, 2.0 * std::numbers::pi);
    if (w < 0.0) w += 2.0 * std::numbers::pi;
    return w;
  }
};

/// Poisson weights e^{-x} x^n / n! for n < d, evaluated in log space.
inline RealVector poisson_weights(double mean, int d) {
  RealVector p(d);
  if (mean == 0.0) {
    p.setZero();
    p(0) = 1.0;
    return p;
  }
  const double lm = std::log(mean);
  for (int n = 0; n < d; ++n) p(n) = std::exp(n * lm - mean - std::lgamma(n + 1.0));
  return p;
}

/// Probability mass of a Poisson(mean) variable at or above d.
inline double poisson_tail(double mean, int d) {
  if (mean == 0.0) return 0.0;
  return boost::math::gamma_p(static_cast<double>(d), mean);
}

namespace detail {

inline double checked_tail(double magnitude, FockDim d) {
  const double tail = poisson_tail(magnitude * magnitude, d.dim);
  require(tail <= kTailTolerance, ErrorKind::cutoff_too_small,
          "cutoff " + std::to_string(d.dim) + " truncates amplitude " + std::to_string(magnitude) +
              " (tail mass " + std::to_string(tail) + ")");
  return tail;
}

}  // namespace detail

/// Normalized truncated coherent-state vector.
inline Vector coherent_vector(cplx alpha, FockDim d, double* discarded = nullptr) {
  const double tail = detail::checked_tail(std::abs(alpha), d);
  if (discarded) *discarded = tail;
  Vector v(d.dim);
  const double r = std::abs(alpha);
  const double ph = std::arg(alpha);
  for (int n = 0; n < d.dim; ++n) {
    const double mag = (r == 0.0) ? (n == 0 ? 1.0 : 0.0)
                                  : std::exp(n * std::log(r) - 0.5 * r * r - 0.5 * std::lgamma(n + 1.0));
    v(n) = std::polar(mag, n * ph);
  }
  return v / v.norm();
}

inline DensityMatrix coherent_state(const CoherentAmplitude& alpha, FockDim d) {
  double discarded = 0.0;
  Vector v = coherent_vector(alpha.value(), d, &discarded);
  return DensityMatrix::assume_psd({d}, v * v.adjoint(), discarded);
}

inline DensityMatrix phase_averaged(double alpha, FockDim d) {
  detail::require(alpha >= 0.0 && std::isfinite(alpha), ErrorKind::invalid_argument,
                  "phase-averaged amplitude must be finite and nonnegative");
  const double discarded = detail::checked_tail(alpha, d);
  RealVector p = poisson_weights(alpha * alpha, d.dim);
  p /= p.sum();
  Matrix m = Matrix::Zero(d.dim, d.dim);
  m.diagonal() = p.cast<cplx>();
  return DensityMatrix::assume_psd({d}, std::move(m), discarded);
}

inline Matrix annihilation(FockDim d) {
  Matrix a = Matrix::Zero(d.dim, d.dim);
  for (int n = 1; n < d.dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline Observable number_operator(FockDim d) {
  RealVector n(d.dim);
  for (int k = 0; k < d.dim; ++k) n(k) = k;
  return Observable::diagonal({d}, n);
}

namespace detail {

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  require(a == b, ErrorKind::dimension_mismatch, std::string(what) + ": mode dimensions differ");
}

struct HermitianSqrt {
  Matrix root;
  double min_eigenvalue;
};

// Eigenvalues below the round-off scale of the largest one are set to zero so
// that rank-deficient inputs do not pick up sqrt(eps) noise.
inline RealVector floored(const RealVector& ev) {
  const double cut = static_cast<double>(ev.size()) * std::numeric_limits<double>::epsilon() *
                     ev.cwiseAbs().maxCoeff();
  return ev.unaryExpr([cut](double x) { return x > cut ? x : 0.0; });
}

inline HermitianSqrt hermitian_sqrt(const Matrix& m, double psd_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  RealVector ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  require(lo >= -psd_tol, ErrorKind::non_physical,
          "negative eigenvalue " + std::to_string(lo) + " beyond tolerance");
  RealVector s = floored(ev).cwiseSqrt();
  return {es.eigenvectors() * s.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint(), lo};
}

}  // namespace detail

/// Uhlmann fidelity [Tr sqrt(sqrt(rho) sigma sqrt(rho))]^2, clamped to [0, 1].
inline double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma, double psd_tol = kPsdTolerance) {
  detail::require_same_dims(rho.dims(), sigma.dims(), "fidelity");
  if (rho.is_diagonal() && sigma.is_diagonal()) {
    RealVector p = rho.diagonal(), q = sigma.diagonal();
    detail::require(p.minCoeff() >= -psd_tol && q.minCoeff() >= -psd_tol, ErrorKind::non_physical,
                    "fidelity needs positive semidefinite arguments");
    const double s = p.cwiseMax(0.0).cwiseSqrt().dot(q.cwiseMax(0.0).cwiseSqrt());
    return std::clamp(s * s, 0.0, 1.0);
  }
  auto root = detail::hermitian_sqrt(rho.matrix(), psd_tol);
  Eigen::SelfAdjointEigenSolver<Matrix> check(sigma.matrix(), Eigen::EigenvaluesOnly);
  detail::require(check.eigenvalues().minCoeff() >= -psd_tol, ErrorKind::non_physical,
                  "fidelity needs positive semidefinite arguments");
  Matrix inner = root.root * sigma.matrix() * root.root;
  inner = 0.5 * (inner + inner.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
  const double s = detail::floored(es.eigenvalues()).cwiseSqrt().sum();
  return std::clamp(s * s, 0.0, 1.0);
}

/// Fidelity with a pure target: <psi| rho |psi>.
inline double fidelity_pure(const Vector& psi, const DensityMatrix& rho) {
  detail::require(psi.size() == rho.size(), ErrorKind::dimension_mismatch,
                  "fidelity_pure: vector and state sizes differ");
  const double f = (psi.adjoint() * rho.matrix() * psi)(0, 0).real() / psi.squaredNorm();
  return std::clamp(f, 0.0, 1.0);
}

inline double trace_product(const Matrix& a, const Matrix& b) {
  return (a.transpose().cwiseProduct(b)).sum().real();
}

inline double expectation(const Observable& a, const DensityMatrix& rho) {
  detail::require_same_dims(a.dims(), rho.dims(), "expectation");
  return trace_product(a.matrix(), rho.matrix());
}

inline DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b) {
  detail::require(a.modes() == 1 && b.modes() == 1, ErrorKind::invalid_argument,
                  "tensor_product takes single-mode operators");
  Matrix k = Eigen::kroneckerProduct(a.matrix(), b.matrix()).eval();
  const bool phys = a.physical() && b.physical();
  return DensityMatrix({a.dims()[0], b.dims()[0]}, std::move(k), phys,
                       a.discarded_mass() + b.discarded_mass(), false);
}

/// Signed affine combination sum_j c_j rho_j; flagged non-physical when its
/// smallest eigenvalue drops below -psd_tol.
inline DensityMatrix linear_combination(const std::vector<DensityMatrix>& ops, const RealVector& c,
                                        double psd_tol = 1e-8) {
  detail::require(!ops.empty() && static_cast<Eigen::Index>(ops.size()) == c.size(),
                  ErrorKind::dimension_mismatch, "linear_combination: size mismatch");
  Matrix m = Matrix::Zero(ops[0].size(), ops[0].size());
  for (std::size_t j = 0; j < ops.size(); ++j) {
    detail::require_same_dims(ops[0].dims(), ops[j].dims(), "linear_combination");
    m += c(static_cast<Eigen::Index>(j)) * ops[j].matrix();
  }
  DensityMatrix out(ops[0].dims(), m, false);
  if (std::abs(out.trace() - 1.0) <= kTraceTolerance && out.min_eigenvalue() >= -psd_tol) {
    return DensityMatrix::assume_psd(ops[0].dims(), std::move(m));
  }
  return out;
}

}  // namespace cse_lab
