#include <cstdlib>

#include <boost/math/distributions/poisson.hpp>
#include <gtest/gtest.h>

#include "cse_lab/fock.hpp"
#include "oracles.hpp"

using namespace cse_lab;

namespace {

Matrix random_state(unsigned seed, int d, int rank) {
  std::srand(seed);
  Matrix x = Matrix::Random(d, rank);
  Matrix rho = x * x.adjoint();
  return rho / rho.trace().real();
}

}  // namespace

TEST(FockDim, RejectsTinyCutoff) {
  EXPECT_THROW(FockDim{1}, Error);
  EXPECT_EQ(FockDim{2}.dim, 2);
}

TEST(FockDim, EnvironmentOverridesDefault) {
  ::setenv("CSE_LAB_DEFAULT_CUTOFF", "17", 1);
  EXPECT_EQ(default_cutoff(), 17);
  ::setenv("CSE_LAB_DEFAULT_CUTOFF", "junk", 1);
  EXPECT_EQ(default_cutoff(), kDefaultCutoff);
  ::unsetenv("CSE_LAB_DEFAULT_CUTOFF");
  EXPECT_EQ(default_cutoff(), 30);
}

TEST(Poisson, MatchesReferenceDistribution) {
  boost::math::poisson_distribution<double> ref(1.7);
  const RealVector p = poisson_weights(1.7, 25);
  for (int n = 0; n < 25; ++n) EXPECT_NEAR(p(n), boost::math::pdf(ref, n), 1e-15);
  EXPECT_NEAR(poisson_tail(1.7, 25), 1.0 - boost::math::cdf(ref, 24), 1e-15);
}

TEST(Coherent, IsEigenvectorOfAnnihilation) {
  const FockDim d{40};
  const cplx alpha(0.7, -0.4);
  const Vector v = coherent_vector(alpha, d);
  const Vector av = annihilation(d) * v;
  EXPECT_LT((av - alpha * v).head(39).norm(), 1e-12);
  EXPECT_NEAR(v.norm(), 1.0, 1e-14);
}

TEST(Coherent, MeanPhotonNumber) {
  const FockDim d{40};
  const auto rho = coherent_state(CoherentAmplitude(1.3, 0.2), d);
  EXPECT_NEAR(expectation(number_operator(d), rho), 1.69, 1e-12);
  EXPECT_TRUE(rho.physical());
}

TEST(Coherent, TruncationIsReported) {
  EXPECT_THROW(coherent_vector({4.0, 0.0}, FockDim{10}), Error);
  try {
    phase_averaged(4.0, FockDim{10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::cutoff_too_small);
  }
}

TEST(PhaseAveraged, IsCoherentStateAveragedOverPhase) {
  const FockDim d{30};
  Matrix avg = Matrix::Zero(30, 30);
  const int k = 64;
  for (int i = 0; i < k; ++i) {
    const Vector v = coherent_vector(std::polar(0.9, 2.0 * std::numbers::pi * i / k), d);
    avg += v * v.adjoint() / static_cast<double>(k);
  }
  EXPECT_LT((avg - phase_averaged(0.9, d).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PhaseAveraged, RejectsNegativeAmplitude) { EXPECT_THROW(phase_averaged(-0.1, FockDim{10}), Error); }

TEST(DensityMatrix, ValidatesPhysicalState) {
  Matrix m = Matrix::Identity(3, 3);
  EXPECT_THROW(DensityMatrix({FockDim{3}}, m), Error);  // trace 3
  m(0, 1) = 0.3;
  EXPECT_THROW(DensityMatrix({FockDim{3}}, m / 3.0, false), Error);  // not Hermitian
  EXPECT_THROW(DensityMatrix({FockDim{3}}, Matrix::Identity(4, 4) / 4.0), Error);
  EXPECT_NO_THROW(DensityMatrix({FockDim{2}, FockDim{2}}, Matrix::Identity(4, 4) / 4.0));
}

TEST(DensityMatrix, NegativeEigenvalueIsNonPhysical) {
  RealVector diag(3);
  diag << 1.2, -0.1, -0.1;
  try {
    DensityMatrix::from_diagonal({FockDim{3}}, diag);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_physical);
  }
  EXPECT_FALSE(DensityMatrix::from_diagonal({FockDim{3}}, diag, false).physical());
}

TEST(Fidelity, DiagonalMatchesClassicalOverlap) {
  const FockDim d{6};
  RealVector p(6), q(6);
  p << 0.1, 0.2, 0.3, 0.2, 0.1, 0.1;
  q << 0.3, 0.1, 0.1, 0.1, 0.2, 0.2;
  const double bc = p.cwiseProduct(q).cwiseSqrt().sum();
  EXPECT_NEAR(fidelity(DensityMatrix::from_diagonal({d}, p), DensityMatrix::from_diagonal({d}, q)), bc * bc, 1e-14);
}

TEST(Fidelity, GeneralMatchesMatrixSquareRoot) {
  const FockDim d{5};
  for (unsigned s = 1; s <= 5; ++s) {
    const Matrix a = random_state(s, 5, 5), b = random_state(100 + s, 5, 5);
    EXPECT_NEAR(fidelity(DensityMatrix({d}, a), DensityMatrix({d}, b)), oracle::fidelity(a, b), 1e-9);
  }
}

TEST(Fidelity, PureStateIsOverlap) {
  const FockDim d{5};
  const Matrix b = random_state(7, 5, 5);
  Vector psi = Vector::Random(5);
  psi.normalize();
  const auto pure = DensityMatrix::from_pure({d}, psi);
  const auto mixed = DensityMatrix({d}, b);
  EXPECT_NEAR(fidelity_pure(psi, mixed), (psi.adjoint() * b * psi)(0, 0).real(), 1e-14);
  EXPECT_NEAR(fidelity(pure, mixed), fidelity_pure(psi, mixed), 1e-9);
  EXPECT_NEAR(fidelity(pure, pure), 1.0, 1e-9);
}

TEST(Fidelity, DimensionMismatchThrows) {
  EXPECT_THROW(fidelity(DensityMatrix::fock(0, FockDim{3}), DensityMatrix::fock(0, FockDim{4})), Error);
}

TEST(TensorProduct, UsesModeMajorIndex) {
  const FockDim d{3};
  const auto rho = tensor_product(DensityMatrix::fock(1, d), DensityMatrix::fock(2, d));
  EXPECT_EQ(rho.dims().size(), 2u);
  EXPECT_DOUBLE_EQ(rho.matrix()(1 * 3 + 2, 1 * 3 + 2).real(), 1.0);
}

TEST(LinearCombination, FlagsNegativeResult) {
  const FockDim d{4};
  RealVector c(2);
  c << 2.0, -1.0;
  const auto x = linear_combination({DensityMatrix::fock(0, d), DensityMatrix::fock(1, d)}, c);
  EXPECT_FALSE(x.physical());
  c << 0.5, 0.5;
  EXPECT_TRUE(linear_combination({DensityMatrix::fock(0, d), DensityMatrix::fock(1, d)}, c).physical());
}

TEST(Observable, EigenboundIsSpectralRadius) {
  RealVector w(4);
  w << -1.0, 2.0, -1.0, 0.0;
  const auto obs = Observable::diagonal({FockDim{4}}, w);
  EXPECT_DOUBLE_EQ(obs.eigenbound(), 2.0);
  EXPECT_DOUBLE_EQ(obs.squared().diagonal_values()(1), 4.0);
}
