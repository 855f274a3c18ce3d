#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cse_lab/experiments.hpp"
#include "oracles.hpp"

using namespace cse_lab;

namespace {

const Representation& single_photon() {
  static const Representation rep = fock_representation(1, single_photon_amplitudes(), FockDim{30});
  return rep;
}

double click(int n, double eta, double eps) { return 1.0 - (1.0 - eps) * std::pow(1.0 - eta, n); }

// Photon-number distribution at the two outputs of a linear two-mode network.
Eigen::MatrixXd output_distribution(const Eigen::Matrix2cd& m, const oracle::Matrix& rho_in, int d) {
  const oracle::Matrix u = oracle::two_mode_unitary(m, d);
  const Eigen::VectorXd diag = (u * rho_in * u.adjoint()).diagonal().real();
  return diag.reshaped(d, d).transpose();  // (a, b) -> diag(a * d + b)
}

double coincidence(const Eigen::MatrixXd& p, double eta, double eps) {
  double s = 0.0;
  for (int a = 0; a < p.rows(); ++a)
    for (int b = 0; b < p.cols(); ++b) s += p(a, b) * click(a, eta, eps) * click(b, eta, eps);
  return s;
}

double marginal_click(const Eigen::MatrixXd& p, double eta, double eps, bool first) {
  double s = 0.0;
  for (int a = 0; a < p.rows(); ++a)
    for (int b = 0; b < p.cols(); ++b) s += p(a, b) * click(first ? a : b, eta, eps);
  return s;
}

Eigen::Matrix2cd balanced() {
  Eigen::Matrix2cd m;
  m << 1.0, 1.0, 1.0, -1.0;
  return m / std::numbers::sqrt2;
}

// Interferometer whose coincidence rate for |1,1> is cos^2(theta).
Eigen::Matrix2cd phase_interferometer(double theta) {
  const double s = std::sin(theta / 2), c = std::cos(theta / 2);
  Eigen::Matrix2cd m;
  m << s, cplx(0, c), cplx(0, c), s;
  return m;
}

oracle::Matrix fock_pair(int a, int b, int d) {
  oracle::Matrix rho = oracle::Matrix::Zero(d * d, d * d);
  rho(a * d + b, a * d + b) = 1.0;
  return rho;
}

}  // namespace

TEST(Clicks, MatchPhotonRoutingEnumeration) {
  for (auto [eta, eps] : {std::pair{0.8, 0.001}, std::pair{0.5, 0.05}, std::pair{1.0, 0.0}}) {
    const DetectorModel det(eta, eps);
    for (int n = 0; n <= 6; ++n)
      for (int m = 0; m <= 4; ++m)
        EXPECT_NEAR(click_probability(m, n, det), oracle::four_detector_click(m, n, eta, eps), 1e-13)
            << eta << ' ' << n << ' ' << m;
  }
}

TEST(Clicks, PovmIsComplete) {
  const auto povm = four_detector_povm_diagonal(DetectorModel(0.8, 0.001), 50);
  RealVector total = RealVector::Zero(50);
  for (const auto& p : povm) total += p;
  EXPECT_LT((total.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Detector, Validation) {
  EXPECT_THROW(DetectorModel(0.0, 0.0), Error);
  EXPECT_THROW(DetectorModel(1.1, 0.0), Error);
  EXPECT_THROW(DetectorModel(0.5, 1.0), Error);
}

TEST(Witness, CoherentValueMatchesDenseExpectation) {
  const FockDim d{40};
  for (double a : {0.0, 0.4, 1.126, 2.3}) {
    const double dense = expectation(witness_observable(d), coherent_state(CoherentAmplitude(a, 0.7), d));
    EXPECT_NEAR(witness_value(a), dense, 1e-12);
    EXPECT_NEAR(coherent_diagonal_expectation(ideal_witness_diagonal(40), a), dense, 1e-12);
  }
}

TEST(Witness, ClassicalLimitAtStationaryPoint) {
  // d/du [(2u - 1 - u^2/2) e^{-u}] = 0 at u = 3 - sqrt(3).
  const double u = 3.0 - std::sqrt(3.0);
  const auto cl = classical_limit(witness_value);
  EXPECT_NEAR(cl.argmax, std::sqrt(u), 1e-6);
  EXPECT_NEAR(cl.value, (2 * u - 1 - 0.5 * u * u) * std::exp(-u), 1e-12);
  EXPECT_NEAR(cl.value, 0.206, 0.001);
}

TEST(Witness, RealisticCoherentValueIsBinomialClickAverage) {
  const DetectorModel det(0.8, 0.001);
  const auto w = realistic_witness(det, 400);
  for (double a : {0.3, 1.0, 1.8}) {
    const double pc = 1.0 - (1.0 - det.epsilon) * std::exp(-det.eta * a * a / 4.0);
    double s = 0.0;
    for (int m = 0; m <= 4; ++m) s += w.z(m) * std::tgamma(5.0) / (std::tgamma(m + 1.0) * std::tgamma(5.0 - m)) *
                                     std::pow(pc, m) * std::pow(1 - pc, 4 - m);
    EXPECT_NEAR(w.coherent_value(a), s, 1e-10) << a;
  }
  double m1 = 0.0, m2 = 0.0;
  for (int m = 0; m <= 4; ++m) {
    m1 += w.z(m) * oracle::four_detector_click(m, 1, 0.8, 0.001);
    m2 += w.z(m) * w.z(m) * oracle::four_detector_click(m, 1, 0.8, 0.001);
  }
  EXPECT_NEAR(w.single_photon_value(), m1, 1e-10);
  EXPECT_NEAR(w.single_photon_variance(), m2 - m1 * m1, 1e-9);
}

TEST(Witness, ExperimentStatistics) {
  const auto& rep = single_photon();
  RunOptions run;
  run.n = 400000;
  run.seed = 3;
  const auto r = witness_experiment(rep, run);
  EXPECT_NEAR(r.estimate.mean, r.representation_value, 5 * r.estimate.std_error);
  EXPECT_NEAR(r.estimate.variance_empirical, r.outcome_level.delta_ab, 0.05 * r.outcome_level.delta_ab);
  EXPECT_NEAR(r.representation_value, 2.0, 2e-3);
  EXPECT_EQ(r.required_n, required_samples(r.probe_resolved.delta_ab, 0.5 * (2.0 - r.classical_limit), 3.0));

  const auto c = witness_experiment(rep, run, nullptr, EmulationMode::conditional);
  EXPECT_NEAR(c.estimate.variance_empirical, c.probe_resolved.delta_ab, 0.05 * c.probe_resolved.delta_ab);
  EXPECT_NEAR(c.estimate.mean, c.representation_value, 5 * c.estimate.std_error);
  EXPECT_LT(c.probe_resolved.delta_ab, c.outcome_level.delta_ab);
}

TEST(Witness, FourDetectorExperimentTracksTarget) {
  const DetectorModel det(0.8, 0.001);
  RunOptions run;
  run.n = 200000;
  run.seed = 4;
  const auto r = witness_experiment(single_photon(), run, &det);
  EXPECT_TRUE(r.four_detector);
  EXPECT_EQ(r.z.size(), 5);
  EXPECT_NEAR(r.representation_value, r.target_value, 2e-3);
  EXPECT_NEAR(r.estimate.mean, r.representation_value, 5 * r.estimate.std_error);
  EXPECT_GT(r.target_value, r.classical_limit);
}

TEST(Hom, TrueCoincidencesFromInternalModes) {
  // Photon a in internal mode x; photon b in f x + sqrt(1 - f^2) y. Each
  // internal mode passes its own copy of the beamsplitter.
  const int d = 3;
  const oracle::Matrix u = oracle::two_mode_unitary(balanced(), d);
  const oracle::Matrix u2 = oracle::kron(u, u);
  for (double f : {0.0, 0.5, std::sqrt(0.95), 1.0}) {
    oracle::Vector psi = oracle::Vector::Zero(d * d * d * d);
    const double g = std::sqrt(1.0 - f * f);
    auto idx = [&](int ax, int bx, int ay, int by) { return (ax * d + bx) * d * d + ay * d + by; };
    psi(idx(1, 1, 0, 0)) = f;
    psi(idx(1, 0, 0, 1)) = g;
    const oracle::Vector out = u2 * psi;
    const double eta = 0.8;
    double p12 = 0.0;
    for (int ax = 0; ax < d; ++ax)
      for (int bx = 0; bx < d; ++bx)
        for (int ay = 0; ay < d; ++ay)
          for (int by = 0; by < d; ++by)
            p12 += std::norm(out(idx(ax, bx, ay, by))) * click(ax + ay, eta, 0.0) * click(bx + by, eta, 0.0);
    EXPECT_NEAR(hom_true_p12(DetectorModel(eta, 0.0), f), p12, 1e-12) << f;
  }
}

TEST(Hom, ProbeCoincidencesMatchDenseInterference) {
  const int d = 16;
  const DetectorModel det(0.8, 0.0);
  for (auto [ak, al] : {std::pair{0.75, 1.0}, std::pair{0.25, 0.5}, std::pair{0.0, 1.0}}) {
    const oracle::Matrix in = oracle::kron(phase_averaged(ak, FockDim{d}).matrix(), phase_averaged(al, FockDim{d}).matrix());
    const auto p = output_distribution(balanced(), in, d);
    EXPECT_NEAR(hom_probe_p12(ak, al, det, 1.0), coincidence(p, 0.8, 0.0), 1e-9);
    // Without overlap the two detectors see independent halves of the light.
    const double q = 1.0 - std::exp(-0.4 * (ak * ak + al * al));
    EXPECT_NEAR(hom_probe_p12(ak, al, det, 0.0), q * q, 1e-12);
  }
}

TEST(Hom, EmulationStatistics) {
  RunOptions run;
  run.n = 1000000;
  run.seed = 2;
  const DetectorModel det(0.8, 0.0);
  const auto r = hom_emulation(single_photon(), det, std::sqrt(0.95), run);
  EXPECT_NEAR(r.estimate.mean, r.p12_representation, 5 * r.estimate.std_error);
  EXPECT_NEAR(r.estimate.variance_empirical, r.estimate.variance_predicted, 0.05 * r.estimate.variance_predicted);
  EXPECT_NEAR(r.p12_representation, r.p12_true, 1e-3);
  EXPECT_DOUBLE_EQ(r.p12_distinguishable, 0.32);
}

TEST(G2, ClosedFormMatchesDenseTwoPhotonInterference) {
  for (auto [eta, eps] : {std::pair{0.8, 0.001}, std::pair{1.0, 0.0}, std::pair{0.6, 0.02}}) {
    for (double theta : {0.2, 1.0, 1.6, 2.9}) {
      const auto p = output_distribution(phase_interferometer(theta), fock_pair(1, 1, 3), 3);
      const double g2 =
          coincidence(p, eta, eps) / (marginal_click(p, eta, eps, true) * marginal_click(p, eta, eps, false));
      EXPECT_NEAR(g2_true(theta, DetectorModel(eta, eps), 1.0), g2, 1e-12) << theta;
      EXPECT_NEAR(p(1, 1), p11_ideal(theta, 1.0), 1e-12);
      EXPECT_NEAR(p(2, 0), p2_ideal(theta, 1.0), 1e-12);
    }
  }
}

TEST(G2, ProbeProbabilitiesMatchDenseInterference) {
  const int d = 16;
  const DetectorModel det(0.8, 0.001);
  for (double theta : {0.3, 1.7}) {
    const oracle::Matrix in = oracle::kron(phase_averaged(0.75, FockDim{d}).matrix(), phase_averaged(0.5, FockDim{d}).matrix());
    const auto p = output_distribution(phase_interferometer(theta), in, d);
    const auto pr = g2_probe_probabilities(0.75, 0.5, theta, det, 1.0);
    EXPECT_NEAR(pr.p11, coincidence(p, 0.8, 0.001), 1e-9);
    EXPECT_NEAR(pr.p1, marginal_click(p, 0.8, 0.001, true), 1e-9);
    EXPECT_NEAR(pr.p2, marginal_click(p, 0.8, 0.001, false), 1e-9);
  }
}

TEST(G2, ScanIsConsistentAndThreadInvariant) {
  const DetectorModel det(0.8, 0.001);
  RunOptions run;
  run.n = 200000;
  run.seed = 8;
  run.threads = 1;
  const std::vector<double> thetas{0.5, 1.5, 2.5};
  const auto a = g2_scan(thetas, single_photon(), det, 0.95, run, EmulationMode::conditional);
  run.threads = 4;
  const auto b = g2_scan(thetas, single_photon(), det, 0.95, run, EmulationMode::conditional);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].g2_emulated, b[k].g2_emulated);
    EXPECT_EQ(a[k].sigma, b[k].sigma);
    EXPECT_NEAR(a[k].g2_emulated, a[k].g2_representation, 5 * a[k].sigma);
    EXPECT_NEAR(a[k].g2_representation, a[k].g2_true, 0.02);
    EXPECT_EQ(a[k].n, 200000u);
  }
  EXPECT_EQ(default_g2_thetas().size(), 12u);
  EXPECT_DOUBLE_EQ(default_g2_thetas().back(), std::numbers::pi);
}

TEST(Bell, NoClickBlockIsDisplacedLossOperator) {
  const int d = 30;
  for (double mu : {-0.7, 0.3, 1.1}) {
    oracle::Matrix loss = oracle::Matrix::Zero(d, d);
    for (int n = 0; n < d; ++n) loss(n, n) = std::pow(0.2, n);
    const oracle::Matrix disp = oracle::displacement(mu, d);
    const oracle::Matrix q = disp * loss * disp.adjoint();
    EXPECT_LT((q.block(0, 0, 2, 2).real() - no_click_block(mu, 0.8)).cwiseAbs().maxCoeff(), 1e-10) << mu;
  }
}

TEST(Bell, CorrelatorsMatchDenseTwoModeExpectation) {
  const int d = 20;
  const double eta = 0.9;
  auto qop = [&](double mu) {
    oracle::Matrix loss = oracle::Matrix::Zero(d, d);
    for (int n = 0; n < d; ++n) loss(n, n) = std::pow(1.0 - eta, n);
    const oracle::Matrix disp = oracle::displacement(mu, d);
    return oracle::Matrix(disp * loss * disp.adjoint());
  };
  oracle::Vector psi = oracle::Vector::Zero(d * d);
  psi(1 * d + 0) = 1.0 / std::numbers::sqrt2;
  psi(0 * d + 1) = -1.0 / std::numbers::sqrt2;
  const oracle::Matrix id = oracle::Matrix::Identity(d, d);
  for (auto [mu, nu] : {std::pair{0.4, -0.6}, std::pair{-0.2, 0.9}}) {
    const double dense = (psi.adjoint() * oracle::kron(qop(mu), qop(nu)) * psi)(0, 0).real();
    EXPECT_NEAR(bell_q(mu, nu, eta), dense, 1e-10);
    EXPECT_NEAR(bell_qa(mu, eta), (psi.adjoint() * oracle::kron(qop(mu), id) * psi)(0, 0).real(), 1e-10);
    EXPECT_NEAR(bell_qb(nu, eta), (psi.adjoint() * oracle::kron(id, qop(nu)) * psi)(0, 0).real(), 1e-10);
  }
}

TEST(Bell, OptimumIsStationary) {
  const DetectorModel det(0.95, 0.0);
  const auto opt = bell_optimize(det);
  EXPECT_LT(opt.j0, -1.0);
  for (double h : {1e-3, -1e-3}) {
    EXPECT_LE(opt.j0, bell_j0(opt.mu1 + h, opt.mu2, det.eta) + 1e-12);
    EXPECT_LE(opt.j0, bell_j0(opt.mu1, opt.mu2 + h, det.eta) + 1e-12);
  }
}

TEST(Bell, VacuumProbeEvents) {
  const auto ev = bell_setting_events(0.0, 1.3, 0.5, 0.2, 0.9);
  const double q1 = std::exp(-0.9 * 0.25), q2 = std::exp(-0.9 * 0.04);
  EXPECT_NEAR(ev[0], q2 * q2, 1e-15);
  EXPECT_NEAR(ev[1], q1 * q1, 1e-15);
  EXPECT_NEAR(ev[2], q2 * (1 - q1), 1e-15);
  EXPECT_NEAR(ev[3], (1 - q1) * q2, 1e-15);
}

TEST(Bell, EmulationModesAreUnbiased) {
  BellConfig cfg;
  cfg.detector = DetectorModel(0.95, 0.0);
  const auto opt = bell_optimize(cfg.detector);
  cfg.mu1 = opt.mu1;
  cfg.mu2 = opt.mu2;
  cfg.single_photon = single_photon();
  RunOptions run;
  run.n = 200000;
  run.seed = 5;
  for (BellMode mode : {BellMode::clicks, BellMode::analytic}) {
    const auto r = bell_emulation(cfg, run, mode);
    EXPECT_NEAR(r.j0_exact, opt.j0, 1e-12);
    EXPECT_NEAR(r.j0_representation, r.j0_exact, 1e-3);
    EXPECT_NEAR(r.estimate.mean, r.j0_representation, 5 * r.estimate.std_error);
    EXPECT_NEAR(r.estimate.variance_empirical, r.estimate.variance_predicted, 0.06 * r.estimate.variance_predicted);
  }
  cfg.mu1 = 0.0;
  EXPECT_THROW(bell_emulation(cfg, run), Error);
}
