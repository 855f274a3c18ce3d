#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "decompose.hpp"
#include "error.hpp"
#include "fock.hpp"
#include "sampler.hpp"

namespace cse_lab {

struct DetectorModel {
  double eta = 0.8;
  double epsilon = 0.001;

  DetectorModel() = default;
  DetectorModel(double efficiency, double dark) : eta(efficiency), epsilon(dark) { validate(); }

  void validate() const {
    detail::require(eta > 0.0 && eta <= 1.0, ErrorKind::invalid_argument, "efficiency must lie in (0, 1]");
    detail::require(epsilon >= 0.0 && epsilon < 1.0, ErrorKind::invalid_argument,
                    "dark-count probability must lie in [0, 1)");
  }
};

/// Emulation protocol: sample a measurement outcome per trial, or use each
/// probe's conditional expectation (no outcome noise).
enum class EmulationMode { outcome, conditional };

inline constexpr int kPhaseQuadrature = 256;

/// Mean of f over a uniform phase grid (periodic trapezoid rule).
template <class F>
double phase_average(F&& f, int points = kPhaseQuadrature) {
  double s = 0.0;
  for (int k = 0; k < points; ++k) s += f(2.0 * std::numbers::pi * k / points);
  return s / points;
}

// ---------------------------------------------------------------------------
// Nonclassicality witness

/// Diagonal of -|0><0| + 2|1><1| - |2><2| on `levels` Fock levels.
inline RealVector ideal_witness_diagonal(int levels) {
  detail::require(levels >= 3, ErrorKind::cutoff_too_small, "witness needs at least three Fock levels");
  RealVector w = RealVector::Zero(levels);
  w(0) = -1.0;
  w(1) = 2.0;
  w(2) = -1.0;
  return w;
}

inline Observable witness_observable(FockDim d) { return Observable::diagonal({d}, ideal_witness_diagonal(d.dim)); }

inline double witness_value(double alpha) {
  detail::require(alpha >= 0.0, ErrorKind::invalid_argument, "amplitude must be nonnegative");
  const double a2 = alpha * alpha;
  return (2.0 * a2 - 1.0 - 0.5 * a2 * a2) * std::exp(-a2);
}

/// Coherent-state expectation sum_n w_n e^{-a^2} a^{2n} / n!.
inline double coherent_diagonal_expectation(const RealVector& w, double alpha) {
  if (alpha == 0.0) return w(0);
  const double mean = alpha * alpha, lm = std::log(mean);
  double s = 0.0;
  for (Eigen::Index n = 0; n < w.size(); ++n) {
    const double p = std::exp(static_cast<double>(n) * lm - mean - std::lgamma(static_cast<double>(n) + 1.0));
    s += w(n) * p;
    if (static_cast<double>(n) > mean && p < 1e-300) break;
  }
  return s;
}

struct ClassicalLimit {
  double value;
  double argmax;
};

/// Maximum of a diagonal witness over coherent amplitudes in [0, alpha_max]:
/// grid search followed by a bracketed Brent refinement.
inline ClassicalLimit classical_limit(const std::function<double(double)>& w, double alpha_max = 4.0,
                                      int grid = 1000) {
  detail::require(alpha_max > 0.0 && grid >= 3, ErrorKind::invalid_argument, "invalid classical-limit search range");
  std::vector<double> xs(grid), ys(grid);
  std::size_t best = 0;
  for (int k = 0; k < grid; ++k) {
    xs[k] = alpha_max * k / (grid - 1);
    ys[k] = w(xs[k]);
    detail::require(std::isfinite(ys[k]), ErrorKind::numerical, "witness value is not finite");
    if (ys[k] > ys[best]) best = static_cast<std::size_t>(k);
  }
  const double lo = xs[best == 0 ? 0 : best - 1];
  const double hi = xs[std::min<std::size_t>(best + 1, xs.size() - 1)];
  auto r = boost::math::tools::brent_find_minima([&](double x) { return -w(x); }, lo, hi,
                                                 std::numeric_limits<double>::digits / 2);
  if (-r.second >= ys[best]) return {-r.second, r.first};
  return {ys[best], xs[best]};
}

// ---------------------------------------------------------------------------
// Four-detector click statistics

/// Probability of m clicks among four detectors for n incident photons.
inline double click_probability(int m, int n, const DetectorModel& det) {
  detail::require(m >= 0 && m <= 4 && n >= 0, ErrorKind::invalid_argument, "click count must be in [0, 4]");
  static constexpr double binom[5][5] = {
      {1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 2, 1, 0, 0}, {1, 3, 3, 1, 0}, {1, 4, 6, 4, 1}};
  double s = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double term = binom[4][m] * binom[m][k] * std::pow(1.0 - det.epsilon, 4 - k) *
                        std::pow(1.0 - (4 - k) * det.eta / 4.0, n);
    s += ((m - k) % 2 == 0) ? term : -term;
  }
  return std::clamp(s, 0.0, 1.0);
}

inline std::vector<RealVector> four_detector_povm_diagonal(const DetectorModel& det, int levels) {
  det.validate();
  std::vector<RealVector> povm(5, RealVector(levels));
  for (int m = 0; m <= 4; ++m)
    for (int n = 0; n < levels; ++n) povm[m](n) = click_probability(m, n, det);
  return povm;
}

inline std::vector<Observable> four_detector_povm(const DetectorModel& det, FockDim d) {
  std::vector<Observable> out;
  for (const auto& p : four_detector_povm_diagonal(det, d.dim)) out.push_back(Observable::diagonal({d}, p));
  return out;
}

/// Ideal witness refitted onto four-detector click outcomes.
struct RealisticWitness {
  DetectorModel detector;
  RealVector z;         // value assigned to m clicks
  RealVector diagonal;  // <n|W4|n> on the fit basis
  int fit_levels = 0;
  ObservableFit fit;

  double single_photon_value() const { return diagonal(1); }

  double single_photon_variance() const {
    double m2 = 0.0;
    for (int m = 0; m <= 4; ++m) m2 += z(m) * z(m) * click_probability(m, 1, detector);
    return m2 - diagonal(1) * diagonal(1);
  }

  double coherent_value(double alpha) const { return coherent_diagonal_expectation(diagonal, alpha); }
};

inline constexpr int kWitnessFitLevels = 2000;

inline RealisticWitness realistic_witness(const DetectorModel& det, int fit_levels = kWitnessFitLevels) {
  detail::require(fit_levels >= 5, ErrorKind::invalid_argument, "fit basis must cover at least five levels");
  RealisticWitness w;
  w.detector = det;
  w.fit_levels = fit_levels;
  w.fit = approximate_observable(ideal_witness_diagonal(fit_levels), four_detector_povm_diagonal(det, fit_levels));
  w.z = w.fit.coefficients;
  w.diagonal = w.fit.fitted;
  return w;
}

struct WitnessReport {
  bool four_detector = false;
  double classical_limit = 0.0;
  double argmax = 0.0;
  double target_value = 0.0;
  double representation_value = 0.0;
  EmulationEstimate estimate;
  EmulationMode mode = EmulationMode::outcome;
  VarianceBreakdown probe_resolved;
  VarianceBreakdown outcome_level;
  double sigmas = 3.0;
  std::uint64_t required_n = 0;
  std::vector<double> probe_values;  // Tr{W rho_j}
  RealVector z;
};

struct RunOptions {
  std::uint64_t n = 100000;
  std::uint64_t seed = 1;
  int threads = 0;
  double sigmas = 3.0;
};

/// Witness measurement on an emulated single-photon state. Required N uses
/// the probe-resolved single-trial variance and half the gap between target
/// and classical limit.
inline WitnessReport witness_experiment(const Representation& rep, const RunOptions& run,
                                        const DetectorModel* four_detector = nullptr,
                                        EmulationMode mode = EmulationMode::outcome,
                                        int fit_levels = kWitnessFitLevels) {
  detail::require(rep.probe_set.kind == ProbeKind::phase_averaged, ErrorKind::invalid_argument,
                  "witness emulation expects phase-averaged probes");
  const FockDim d = rep.probe_set.dims().front();
  WitnessReport out;
  out.mode = mode;
  out.sigmas = run.sigmas;
  std::optional<MeasurementModel> meas;
  RealVector wdiag;
  if (four_detector) {
    out.four_detector = true;
    const RealisticWitness w = realistic_witness(*four_detector, fit_levels);
    out.z = w.z;
    auto cl = classical_limit([&](double a) { return w.coherent_value(a); });
    out.classical_limit = cl.value;
    out.argmax = cl.argmax;
    out.target_value = w.single_photon_value();
    wdiag = w.diagonal.head(d.dim);
    std::vector<RealVector> povm;
    for (const auto& p : four_detector_povm_diagonal(*four_detector, d.dim)) povm.push_back(p);
    meas.emplace(MeasurementModel::from_povm(rep.probe_set, povm, w.z));
  } else {
    auto cl = classical_limit(witness_value);
    out.classical_limit = cl.value;
    out.argmax = cl.argmax;
    out.target_value = 2.0;
    wdiag = ideal_witness_diagonal(d.dim);
    meas.emplace(MeasurementModel::photon_counting(rep.probe_set, wdiag));
  }
  const auto j = static_cast<Eigen::Index>(rep.probe_set.size());
  RealVector first(j);
  for (Eigen::Index k = 0; k < j; ++k) {
    first(k) = rep.probe_set.probes[static_cast<std::size_t>(k)].diagonal().dot(wdiag);
    out.probe_values.push_back(first(k));
  }
  out.probe_resolved = signed_variance(rep.coefficients, first, first.cwiseAbs2());
  out.outcome_level = excess_variance(rep.coefficients, *meas);
  out.representation_value = out.probe_resolved.mean;
  const SignedMixture mix = SignedMixture::from_representation(rep);
  if (mode == EmulationMode::conditional) {
    out.estimate = emulate_expectation(mix, MeasurementModel::deterministic(out.probe_values), run.n, run.seed,
                                       {run.threads, 0});
  } else {
    out.estimate = emulate_expectation(mix, *meas, run.n, run.seed, {run.threads, 0});
  }
  const double halfwidth = 0.5 * (out.target_value - out.classical_limit);
  out.required_n = required_samples(out.probe_resolved.delta_ab, halfwidth, run.sigmas);
  return out;
}

// ---------------------------------------------------------------------------
// Hong-Ou-Mandel

/// Coincidence probability for two single photons with mode overlap f.
inline double hom_true_p12(const DetectorModel& det, double f) {
  detail::require(f >= 0.0 && f <= 1.0, ErrorKind::invalid_argument, "overlap must lie in [0, 1]");
  return (1.0 - f * f) * det.eta * det.eta / 2.0;
}

/// No-click probabilities of the two output detectors for phase-averaged
/// inputs at relative phase phi (no dark counts in this model).
inline std::pair<double, double> hom_no_click(double ak, double al, double phi, const DetectorModel& det, double f) {
  const double base = ak * ak + al * al, cross = 2.0 * f * ak * al * std::cos(phi);
  return {std::exp(-0.5 * det.eta * (base + cross)), std::exp(-0.5 * det.eta * (base - cross))};
}

inline double hom_probe_p12(double ak, double al, const DetectorModel& det, double f, int quad = kPhaseQuadrature) {
  return phase_average(
      [&](double phi) {
        auto [pp, pm] = hom_no_click(ak, al, phi, det, f);
        return (1.0 - pp) * (1.0 - pm);
      },
      quad);
}

/// Product representation c_k c_l over probe pairs (k, l), flattened k * J + l.
inline RealVector pair_coefficients(const RealVector& c) {
  const auto j = c.size();
  RealVector out(j * j);
  for (Eigen::Index k = 0; k < j; ++k)
    for (Eigen::Index l = 0; l < j; ++l) out(k * j + l) = c(k) * c(l);
  return out;
}

struct HomReport {
  double p12_true = 0.0;
  double p12_representation = 0.0;
  double p12_distinguishable = 0.0;
  EmulationEstimate estimate;
  VarianceBreakdown variance;
  double sigmas = 3.0;
  std::uint64_t required_n = 0;
};

/// Signed Monte Carlo over probe pairs; each trial draws a relative phase and
/// the two detector clicks, recording a coincidence.
inline HomReport hom_emulation(const Representation& single, const DetectorModel& det, double f, const RunOptions& run) {
  det.validate();
  detail::require(f >= 0.0 && f <= 1.0, ErrorKind::invalid_argument, "overlap must lie in [0, 1]");
  const auto amps = single.probe_set.magnitudes();
  const auto j = static_cast<Eigen::Index>(amps.size());
  const RealVector c2 = pair_coefficients(single.coefficients);
  RealVector t(j * j);
  for (Eigen::Index k = 0; k < j; ++k)
    for (Eigen::Index l = 0; l < j; ++l) t(k * j + l) = hom_probe_p12(amps[k], amps[l], det, f);
  HomReport out;
  out.sigmas = run.sigmas;
  out.p12_true = hom_true_p12(det, f);
  out.p12_distinguishable = det.eta * det.eta / 2.0;
  out.variance = signed_variance(c2, t, t);  // binary outcome: A^2 = A
  out.p12_representation = out.variance.mean;
  const SignedMixture mix = SignedMixture::from_coefficients(c2);
  const double zeta = mix.zeta;
  auto acc = run_trials(run.n, run.seed, 0, run.threads, Moments<1>{}, [&](Engine& e, Moments<1>& m) {
    const SignedDraw dr = sample_signed(mix, e);
    const double ak = amps[dr.index / static_cast<std::size_t>(j)], al = amps[dr.index % static_cast<std::size_t>(j)];
    auto [pp, pm] = hom_no_click(ak, al, uniform_phase(e), det, f);
    const bool c1 = uniform01(e) >= pp;
    const bool c2b = uniform01(e) >= pm;
    m.add((c1 && c2b) ? zeta * dr.sign : 0.0);
  });
  out.estimate = make_estimate(acc, run.seed);
  out.estimate.variance_predicted = out.variance.delta_ab;
  const double halfwidth = 0.5 * (out.p12_distinguishable - out.p12_true);
  out.required_n = required_samples(out.variance.delta_ab, halfwidth, run.sigmas);
  return out;
}

// ---------------------------------------------------------------------------
// NOON phase estimation (normalized coincidences)

inline double g2_true(double theta, const DetectorModel& det, double f) {
  const double eta = det.eta, eps = det.epsilon;
  const double z = (1.0 + f) * eta * std::cos(2.0 * theta);
  const double num = 16.0 * (eta * (1.0 - eps) * (z + eta * (3.0 - f - 4.0 * eps) + 8.0 * eps) + 4.0 * eps * eps);
  const double den = eta * (1.0 - eps) * z + eta * (1.0 - eps) * (8.0 - f * eta - eta) + 8.0 * eps;
  return num / (den * den);
}

inline double p2_ideal(double theta, double f) { return (1.0 + f) / 4.0 * std::sin(theta) * std::sin(theta); }

inline double p11_ideal(double theta, double f) {
  return (1.0 - f) / 2.0 + (1.0 + f) / 2.0 * std::cos(theta) * std::cos(theta);
}

/// (p_-, p_+) no-click probabilities for probe amplitudes (x, y); the cross
/// term carries sqrt(f).
inline std::pair<double, double> g2_no_click(double x, double y, double theta, double phi, const DetectorModel& det,
                                             double f) {
  const double ct = std::cos(theta);
  const double cross = 2.0 * std::sqrt(f) * x * y * std::sin(theta) * std::sin(phi);
  const double em = x * x * (1.0 - ct) + y * y * (1.0 + ct) - cross;
  const double ep = x * x * (1.0 + ct) + y * y * (1.0 - ct) + cross;
  const double keep = 1.0 - det.epsilon;
  return {keep * std::exp(-0.5 * det.eta * em), keep * std::exp(-0.5 * det.eta * ep)};
}

struct G2ProbeProbabilities {
  double p11, p1, p2;
};

inline G2ProbeProbabilities g2_probe_probabilities(double x, double y, double theta, const DetectorModel& det, double f,
                                                   int quad = kPhaseQuadrature) {
  G2ProbeProbabilities out{0.0, 0.0, 0.0};
  for (int k = 0; k < quad; ++k) {
    auto [pm, pp] = g2_no_click(x, y, theta, 2.0 * std::numbers::pi * k / quad, det, f);
    out.p11 += (1.0 - pm) * (1.0 - pp);
    out.p1 += 1.0 - pm;
    out.p2 += 1.0 - pp;
  }
  out.p11 /= quad;
  out.p1 /= quad;
  out.p2 /= quad;
  return out;
}

struct G2Point {
  double theta = 0.0;
  double g2_true = 0.0;
  double g2_representation = 0.0;
  double g2_emulated = 0.0;
  double sigma = 0.0;
  double p11 = 0.0, p1 = 0.0, p2 = 0.0;
  double p2_ideal = 0.0, p11_ideal = 0.0;
  std::uint64_t n = 0;
};

inline std::vector<double> default_g2_thetas(int points = 12) {
  std::vector<double> out;
  for (int k = 0; k < points; ++k) out.push_back(std::numbers::pi * k / (points - 1));
  return out;
}

/// Signed emulation of p11, p1. and p.1 on product probes rho_i (x) rho_j
/// with a random phase per trial. sigma is the delta-method error of the ratio,
/// taking the gradient at the represented probabilities and the covariance
/// from the trials, so it does not shrink along with a low estimate. In conditional mode a trial records the click
/// probabilities at its phase instead of sampled clicks.
inline std::vector<G2Point> g2_scan(const std::vector<double>& thetas, const Representation& single,
                                    const DetectorModel& det, double f, const RunOptions& run,
                                    EmulationMode mode = EmulationMode::outcome) {
  det.validate();
  detail::require(!thetas.empty(), ErrorKind::invalid_argument, "theta grid is empty");
  detail::require(f >= 0.0 && f <= 1.0, ErrorKind::invalid_argument, "overlap must lie in [0, 1]");
  const auto amps = single.probe_set.magnitudes();
  const auto j = amps.size();
  const RealVector c2 = pair_coefficients(single.coefficients);
  const SignedMixture mix = SignedMixture::from_coefficients(c2);
  const double zeta = mix.zeta;
  std::vector<G2Point> out;
  for (std::size_t idx = 0; idx < thetas.size(); ++idx) {
    const double theta = thetas[idx];
    G2Point pt;
    pt.theta = theta;
    pt.g2_true = g2_true(theta, det, f);
    pt.p2_ideal = p2_ideal(theta, f);
    pt.p11_ideal = p11_ideal(theta, f);
    double r11 = 0.0, r1 = 0.0, r2 = 0.0;
    for (std::size_t k = 0; k < j; ++k)
      for (std::size_t l = 0; l < j; ++l) {
        const auto pr = g2_probe_probabilities(amps[k], amps[l], theta, det, f);
        const double w = c2(static_cast<Eigen::Index>(k * j + l));
        r11 += w * pr.p11;
        r1 += w * pr.p1;
        r2 += w * pr.p2;
      }
    pt.g2_representation = r11 / (r1 * r2);
    auto acc = run_trials(run.n, run.seed, idx, run.threads, Moments<3>{}, [&](Engine& e, Moments<3>& m) {
      const SignedDraw dr = sample_signed(mix, e);
      auto [pm, pp] = g2_no_click(amps[dr.index / j], amps[dr.index % j], theta, uniform_phase(e), det, f);
      const double w = zeta * dr.sign;
      if (mode == EmulationMode::conditional) {
        m.add({w * (1.0 - pm) * (1.0 - pp), w * (1.0 - pm), w * (1.0 - pp)});
        return;
      }
      const bool d1 = uniform01(e) >= pm;
      const bool d2 = uniform01(e) >= pp;
      m.add({(d1 && d2) ? w : 0.0, d1 ? w : 0.0, d2 ? w : 0.0});
    });
    pt.n = acc.count;
    pt.p11 = acc.mean(0);
    pt.p1 = acc.mean(1);
    pt.p2 = acc.mean(2);
    pt.g2_emulated = pt.p11 / (pt.p1 * pt.p2);
    const std::array<double, 3> grad{1.0 / (r1 * r2), -r11 / (r1 * r1 * r2), -r11 / (r1 * r2 * r2)};
    double var = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) var += grad[a] * grad[b] * acc.covariance(a, b);
    pt.sigma = std::sqrt(std::max(var, 0.0) / static_cast<double>(acc.count));
    out.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clauser-Horne test with displaced on-off detection

/// Displaced no-click operator restricted to {|0>, |1>} for real displacement mu.
inline Eigen::Matrix2d no_click_block(double mu, double eta) {
  const double e = std::exp(-eta * mu * mu);
  Eigen::Matrix2d q;
  q << e, e * eta * mu, e * eta * mu, e * (1.0 - eta + eta * eta * mu * mu);
  return q;
}

namespace detail {

/// (|10> - |01>)/sqrt(2) in the basis {|00>, |01>, |10>, |11>}.
inline Eigen::Vector4d bell_state() {
  Eigen::Vector4d v = Eigen::Vector4d::Zero();
  v(2) = 1.0 / std::numbers::sqrt2;
  v(1) = -1.0 / std::numbers::sqrt2;
  return v;
}

inline double bell_expect(const Eigen::Matrix2d& qa, const Eigen::Matrix2d& qb) {
  Eigen::Matrix4d k;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) k.block<2, 2>(2 * a, 2 * b) = qa(a, b) * qb;
  const Eigen::Vector4d v = bell_state();
  return v.dot(k * v);
}

}  // namespace detail

inline double bell_q(double mu, double nu, double eta) {
  return detail::bell_expect(no_click_block(mu, eta), no_click_block(nu, eta));
}

inline double bell_qa(double mu, double eta) { return detail::bell_expect(no_click_block(mu, eta), Eigen::Matrix2d::Identity()); }

inline double bell_qb(double mu, double eta) { return detail::bell_expect(Eigen::Matrix2d::Identity(), no_click_block(mu, eta)); }

/// <J0> on the entangled single-photon state for settings mu1, mu2.
inline double bell_j0(double mu1, double mu2, double eta) {
  return bell_q(-mu2, mu2, eta) - bell_q(mu1, -mu1, eta) - bell_qa(-mu2, eta) + bell_q(-mu2, -mu1, eta) -
         bell_qb(mu2, eta) + bell_q(mu1, mu2, eta);
}

struct BellOptimum {
  double j0 = 0.0;
  double mu1 = 0.0;
  double mu2 = 0.0;
  int iterations = 0;
};

namespace detail {

struct BellObjective {
  double eta;
};

inline double bell_objective(const gsl_vector* x, void* params) {
  const auto* p = static_cast<const BellObjective*>(params);
  return bell_j0(gsl_vector_get(x, 0), gsl_vector_get(x, 1), p->eta);
}

}  // namespace detail

/// Minimizes <J0> over (mu1, mu2) by Nelder-Mead started from the best point
/// of a 20 x 20 grid (ties resolved toward smaller mu1).
inline BellOptimum bell_optimize(const DetectorModel& det, double grid_max = 1.5) {
  det.validate();
  double best = std::numeric_limits<double>::infinity(), s1 = 0.0, s2 = 0.0;
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b) {
      const double m1 = grid_max * (a + 1) / 20.0, m2 = grid_max * (b + 1) / 20.0;
      const double v = bell_j0(m1, m2, det.eta);
      if (v < best) {
        best = v;
        s1 = m1;
        s2 = m2;
      }
    }
  detail::BellObjective params{det.eta};
  gsl_multimin_function fn{&detail::bell_objective, 2, &params};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector* step = gsl_vector_alloc(2);
  gsl_vector_set(x, 0, s1);
  gsl_vector_set(x, 1, s2);
  gsl_vector_set_all(step, 0.05);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  gsl_multimin_fminimizer_set(s, &fn, x, step);
  int status = GSL_CONTINUE, iter = 0;
  for (; status == GSL_CONTINUE && iter < 5000; ++iter) {
    if (gsl_multimin_fminimizer_iterate(s)) {
      status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-5);
      break;
    }
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-7);
  }
  BellOptimum out{s->fval, gsl_vector_get(s->x, 0), gsl_vector_get(s->x, 1), iter};
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(x);
  gsl_vector_free(step);
  if (status != GSL_SUCCESS) throw Error(ErrorKind::not_converged, "Bell optimizer did not converge");
  return out;
}

/// Probe no-click probability exp(-eta |alpha e^{i phi} / sqrt(2) - nu|^2).
inline double bell_probe_q(double alpha, double nu, double phi, double eta) {
  const cplx amp = std::polar(alpha / std::numbers::sqrt2, phi) - nu;
  return std::exp(-eta * std::norm(amp));
}

/// The four measured event probabilities for one probe and phase, in the
/// order of the J0 terms (+, -, -, -).
inline std::array<double, 4> bell_setting_events(double alpha, double phi, double mu1, double mu2, double eta) {
  // Bob's output mode carries the opposite sign, so his setting +mu2 sees the
  // same displaced amplitude as Alice's -mu2.
  const double q2 = bell_probe_q(alpha, -mu2, phi, eta);
  const double q1 = bell_probe_q(alpha, mu1, phi, eta);
  return {q2 * q2, q1 * q1, q2 * (1.0 - q1), (1.0 - q1) * q2};
}

inline constexpr std::array<double, 4> kBellSigns{1.0, -1.0, -1.0, -1.0};

inline double bell_probe_j0(double alpha, double phi, double mu1, double mu2, double eta) {
  const auto ev = bell_setting_events(alpha, phi, mu1, mu2, eta);
  double s = 0.0;
  for (int t = 0; t < 4; ++t) s += kBellSigns[t] * ev[t];
  return s;
}

/// Clicks: each of the four settings is run N times on fresh probe draws and
/// click outcomes are sampled. Analytic: each trial draws (j, phi) and
/// records the probe's J0 expectation directly.
enum class BellMode { clicks, analytic };

struct BellConfig {
  double mu1 = 0.0;
  double mu2 = 0.0;
  DetectorModel detector;
  Representation single_photon;
};

struct BellReport {
  BellMode mode = BellMode::clicks;
  double j0_exact = 0.0;
  double j0_representation = 0.0;
  EmulationEstimate estimate;  // variances are per trial of all settings combined
  double sigmas = 3.0;
  std::uint64_t required_n = 0;
};

inline BellReport bell_emulation(const BellConfig& cfg, const RunOptions& run, BellMode mode = BellMode::clicks) {
  cfg.detector.validate();
  detail::require(cfg.mu1 > 0.0 && cfg.mu2 > 0.0, ErrorKind::invalid_argument, "displacements must be positive");
  const auto amps = cfg.single_photon.probe_set.magnitudes();
  const RealVector& c = cfg.single_photon.coefficients;
  const double eta = cfg.detector.eta;
  BellReport out;
  out.mode = mode;
  out.sigmas = run.sigmas;
  out.j0_exact = bell_j0(cfg.mu1, cfg.mu2, eta);
  const auto jn = c.size();
  std::array<RealVector, 4> ev;
  for (auto& v : ev) v.resize(jn);
  RealVector jmean(jn), jsq(jn);
  for (Eigen::Index k = 0; k < jn; ++k) {
    std::array<double, 4> s{};
    double m = 0.0, m2 = 0.0;
    for (int q = 0; q < kPhaseQuadrature; ++q) {
      const double phi = 2.0 * std::numbers::pi * q / kPhaseQuadrature;
      const auto e = bell_setting_events(amps[static_cast<std::size_t>(k)], phi, cfg.mu1, cfg.mu2, eta);
      double jv = 0.0;
      for (int t = 0; t < 4; ++t) {
        s[t] += e[t];
        jv += kBellSigns[t] * e[t];
      }
      m += jv;
      m2 += jv * jv;
    }
    for (int t = 0; t < 4; ++t) ev[t](k) = s[t] / kPhaseQuadrature;
    jmean(k) = m / kPhaseQuadrature;
    jsq(k) = m2 / kPhaseQuadrature;
  }
  out.j0_representation = c.dot(jmean);
  const SignedMixture mix = SignedMixture::from_representation(cfg.single_photon);
  const double zeta = mix.zeta;
  if (mode == BellMode::analytic) {
    auto acc = run_trials(run.n, run.seed, 0, run.threads, Moments<1>{}, [&](Engine& e, Moments<1>& m) {
      const SignedDraw dr = sample_signed(mix, e);
      m.add(zeta * dr.sign * bell_probe_j0(amps[dr.index], uniform_phase(e), cfg.mu1, cfg.mu2, eta));
    });
    out.estimate = make_estimate(acc, run.seed);
    out.estimate.variance_predicted = signed_variance(c, jmean, jsq).delta_ab;
  } else {
    double mean = 0.0, var_emp = 0.0, var_pred = 0.0;
    for (int t = 0; t < 4; ++t) {
      auto acc = run_trials(run.n, run.seed, static_cast<std::uint64_t>(t), run.threads, Moments<1>{},
                            [&](Engine& e, Moments<1>& m) {
                              const SignedDraw dr = sample_signed(mix, e);
                              const double alpha = amps[dr.index];
                              const double phi = uniform_phase(e);
                              // Given the probe, the two stations click independently.
                              const double qa = t == 0 || t == 2 ? bell_probe_q(alpha, -cfg.mu2, phi, eta)
                                                                 : bell_probe_q(alpha, cfg.mu1, phi, eta);
                              const double qb = t == 1 || t == 2 ? bell_probe_q(alpha, cfg.mu1, phi, eta)
                                                                 : bell_probe_q(alpha, -cfg.mu2, phi, eta);
                              const bool a_off = uniform01(e) < qa;
                              const bool b_off = uniform01(e) < qb;
                              bool hit = false;
                              switch (t) {
                                case 0:
                                case 1: hit = a_off && b_off; break;
                                case 2: hit = a_off && !b_off; break;
                                default: hit = !a_off && b_off; break;
                              }
                              m.add(hit ? zeta * dr.sign : 0.0);
                            });
      mean += kBellSigns[t] * acc.mean();
      var_emp += acc.variance();
      var_pred += signed_variance(c, ev[t], ev[t]).delta_ab;
    }
    out.estimate.mean = mean;
    out.estimate.n_samples = run.n;
    out.estimate.seed = run.seed;
    out.estimate.variance_empirical = var_emp;
    out.estimate.variance_predicted = var_pred;
    out.estimate.std_error = std::sqrt(var_emp / static_cast<double>(run.n));
  }
  const double margin = std::abs(out.j0_representation + 1.0);
  out.required_n = margin > 0.0 ? required_samples(out.estimate.variance_predicted, margin, run.sigmas) : 0;
  return out;
}

}  // namespace cse_lab
