#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "decompose.hpp"
#include "experiments.hpp"
#include "fock.hpp"
#include "sampler.hpp"

namespace cse_lab {

namespace detail {

/// Random density matrix from a Ginibre matrix of the given rank, embedded in
/// the lowest `active` levels of a d-level space.
inline DensityMatrix random_density(Engine& e, FockDim d, int active, int rank) {
  std::normal_distribution<double> g;
  Matrix x = Matrix::Zero(d.dim, rank);
  for (int r = 0; r < active; ++r)
    for (int k = 0; k < rank; ++k) x(r, k) = cplx(g(e), g(e));
  Matrix rho = x * x.adjoint();
  rho /= rho.trace().real();
  return DensityMatrix({d}, rho);
}

inline Matrix random_hermitian(Engine& e, int n) {
  std::normal_distribution<double> g;
  Matrix x(n, n);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < n; ++k) x(r, k) = cplx(g(e), g(e));
  return 0.5 * (x + x.adjoint());
}

}  // namespace detail

struct SystematicBoundCheck {
  int trials = 0;
  int violations = 0;
  double worst_slack = -std::numeric_limits<double>::infinity();  // max of lhs - bound
};

/// Random (state, approximation, observable) triples tested against
/// |Tr{A(rho - rho_true)}| <= 2 M sqrt(1 - F).
inline SystematicBoundCheck check_systematic_bound(int trials, std::uint64_t seed, int dim = 6, double slack = 1e-8) {
  SystematicBoundCheck out;
  out.trials = trials;
  const FockDim d{dim};
  for (int t = 0; t < trials; ++t) {
    Engine e = make_stream(seed, 0, static_cast<std::uint64_t>(t));
    std::uniform_real_distribution<double> u;
    const DensityMatrix truth = detail::random_density(e, d, dim, 1 + t % dim);
    const DensityMatrix other = detail::random_density(e, d, dim, 1 + (t / dim) % dim);
    const double mix = std::pow(u(e), 3.0);
    const DensityMatrix approx({d}, (1.0 - mix) * truth.matrix() + mix * other.matrix());
    const Matrix a = detail::random_hermitian(e, dim);
    const double m = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().cwiseAbs().maxCoeff();
    const double lhs = std::abs(trace_product(a, approx.matrix() - truth.matrix()));
    const double bound = systematic_error_bound(std::min(1.0, fidelity(truth, approx)), m);
    out.worst_slack = std::max(out.worst_slack, lhs - bound);
    if (lhs > bound + slack) ++out.violations;
  }
  return out;
}

struct ConvergencePoint {
  std::uint64_t n = 0;
  double rms_error = 0.0;
};

struct ConvergenceCheck {
  std::vector<ConvergencePoint> points;
  double slope = 0.0;
};

/// RMS error of the emulated witness mean over independent replicas at each
/// sample size, with the least-squares slope of log(rms) against log(N).
inline ConvergenceCheck check_convergence(const Representation& rep, const std::vector<std::uint64_t>& sizes,
                                          int replicas, std::uint64_t seed, int threads = 0) {
  detail::require(sizes.size() >= 2 && replicas >= 2, ErrorKind::invalid_argument,
                  "convergence check needs two sizes and two replicas");
  const FockDim d = rep.probe_set.dims().front();
  const MeasurementModel meas = MeasurementModel::photon_counting(rep.probe_set, ideal_witness_diagonal(d.dim));
  const SignedMixture mix = SignedMixture::from_representation(rep);
  const RealVector wdiag = ideal_witness_diagonal(d.dim);
  const double exact = reconstruct(rep).diagonal().dot(wdiag);
  ConvergenceCheck out;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    double sq = 0.0;
    for (int r = 0; r < replicas; ++r) {
      const auto est = emulate_expectation(mix, meas, sizes[s], seed,
                                           {threads, static_cast<std::uint64_t>(s) * 1000003u + static_cast<std::uint64_t>(r)});
      sq += (est.mean - exact) * (est.mean - exact);
    }
    out.points.push_back({sizes[s], std::sqrt(sq / replicas)});
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double k = static_cast<double>(out.points.size());
  for (const auto& p : out.points) {
    const double x = std::log(static_cast<double>(p.n)), y = std::log(p.rms_error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  out.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return out;
}

struct MseCheck {
  double predicted = 0.0;
  double empirical = 0.0;
  double zeta = 0.0;
  std::optional<double> predicted_pure;
  double relative_error() const { return std::abs(empirical - predicted) / predicted; }
};

/// Average Tr{(rho_hat - rho)^2} over multinomial resamplings of N_s signed
/// draws, against the closed-form prediction.
inline MseCheck check_sampling_mse(const Representation& rep, std::uint64_t n_s, int replicas, std::uint64_t seed) {
  detail::require(replicas >= 1, ErrorKind::invalid_argument, "MSE check needs at least one replica");
  const Eigen::MatrixXd g = probe_gram(rep.probe_set);
  const SignedMixture mix = SignedMixture::from_representation(rep);
  const RealVector& c = rep.coefficients;
  MseCheck out;
  const MseReport pred = sampling_mse(rep, n_s);
  out.predicted = pred.general;
  out.predicted_pure = pred.pure;
  out.zeta = mix.zeta;
  double total = 0.0;
  for (int r = 0; r < replicas; ++r) {
    Engine e = make_stream(seed, 0, static_cast<std::uint64_t>(r));
    RealVector est = RealVector::Zero(c.size());
    for (std::uint64_t k = 0; k < n_s; ++k) {
      const SignedDraw dr = sample_signed(mix, e);
      est(static_cast<Eigen::Index>(dr.index)) += dr.sign * mix.zeta;
    }
    const RealVector diff = est / static_cast<double>(n_s) - c;
    total += diff.dot(g * diff);
  }
  out.empirical = total / replicas;
  return out;
}

struct ResidualCheck {
  std::vector<cplx> residual;
  std::vector<cplx> finite_difference;
  double max_abs_error = 0.0;
};

/// Squared Hilbert-Schmidt distance of a coherent-probe reconstruction from
/// its target, as a function of the probe amplitudes.
inline double hs_distance_sq(const std::vector<cplx>& amps, const RealVector& c, const DensityMatrix& target) {
  const FockDim d = target.dims().front();
  Matrix delta = -target.matrix();
  for (std::size_t j = 0; j < amps.size(); ++j) {
    const Vector v = coherent_vector(amps[j], d);
    delta += c(static_cast<Eigen::Index>(j)) * (v * v.adjoint());
  }
  return (delta * delta).trace().real();
}

/// Compares the optimality residual of each probe with the central-difference
/// gradient of the squared distance, (dD/dx + i dD/dy) / (4 c_j).
inline ResidualCheck check_optimality_residual(const Representation& rep, double step = 1e-5) {
  ResidualCheck out;
  out.residual = optimality_residual(rep);
  const auto& amps = rep.probe_set.amplitudes;
  for (std::size_t j = 0; j < amps.size(); ++j) {
    auto shifted = [&](cplx delta) {
      std::vector<cplx> a = amps;
      a[j] += delta;
      return hs_distance_sq(a, rep.coefficients, rep.target);
    };
    const double dx = (shifted({step, 0.0}) - shifted({-step, 0.0})) / (2.0 * step);
    const double dy = (shifted({0.0, step}) - shifted({0.0, -step})) / (2.0 * step);
    const cplx fd = cplx(dx, dy) / (4.0 * rep.coefficients(static_cast<Eigen::Index>(j)));
    out.finite_difference.push_back(fd);
    out.max_abs_error = std::max(out.max_abs_error, std::abs(fd - out.residual[j]));
  }
  return out;
}

/// A coherent-probe representation with random amplitudes and signed
/// coefficients against a random low-level target. The reconstruction is in
/// general not a state, so fidelity is left unset.
inline Representation random_coherent_representation(std::uint64_t seed, int probes = 4, FockDim d = FockDim{30}) {
  Engine e = make_stream(seed, 0, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<cplx> amps;
  for (int j = 0; j < probes; ++j) amps.emplace_back(u(e), u(e));
  RealVector c(probes);
  for (int j = 0; j < probes; ++j) c(j) = u(e);
  c(0) += 1.0 - c.sum();
  Representation rep;
  rep.probe_set = ProbeSet::coherent(amps, d);
  rep.coefficients = c;
  std::tie(rep.zeta_plus, rep.zeta_minus) = zeta_split(c);
  rep.fidelity = std::numeric_limits<double>::quiet_NaN();
  rep.target = detail::random_density(e, d, 3, 2);
  return rep;
}

}  // namespace cse_lab
