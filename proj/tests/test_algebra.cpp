#include "grf/algebra.hpp"
#include "grf/instances.hpp"

#include <gtest/gtest.h>

using namespace grf;

TEST(Algebra, AbelianPassesWithSplitSignature) {
  const auto a = abelian(4, 2);
  const auto r = validate_algebra(a);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.p, 2);
  EXPECT_EQ(r.q, 2);
  EXPECT_EQ(a.c().max_abs(), 0.0);
  EXPECT_EQ(a.eta()(2, 2), -1.0);
}

TEST(Algebra, So3IsValidWithNormSix) {
  const auto a = so3(1.0);
  const auto r = validate_algebra(a);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.p, 3);
  EXPECT_EQ(r.q, 0);
  EXPECT_EQ(r.jacobi_residual, 0.0);
  EXPECT_NEAR(a.c_norm2(), 6.0, 1e-14);
}

TEST(Algebra, NonAntisymmetricTensorFails) {
  Tensor c(3, 3);
  c(0, 1, 2) = 1.0;
  c(1, 0, 2) = 1.0;
  const QuadraticLieAlgebra a(Matrix::Identity(3, 3), c);
  const auto r = validate_algebra(a);
  EXPECT_FALSE(r.pass);
  EXPECT_DOUBLE_EQ(r.antisymmetry_residual, 2.0);
}

TEST(Algebra, SingularPairingRejected) {
  Matrix eta = Matrix::Identity(3, 3);
  eta(2, 2) = 0.0;
  EXPECT_THROW(QuadraticLieAlgebra(eta, Tensor(3, 3)), NonInvertiblePairing);
}

TEST(Algebra, CotangentDoubleOfSu2) {
  const auto a = cotangent_double(su2_structure());
  EXPECT_EQ(a.n(), 6);
  const auto r = validate_algebra(a);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.p, 3);
  EXPECT_EQ(r.q, 3);
  EXPECT_EQ(r.jacobi_residual, 0.0);
  EXPECT_NEAR(a.c_norm2(), 0.0, 1e-14);
}

TEST(Algebra, CotangentDoubleBracketMatchesCoadjointAction) {
  // [x_i, xi^j] = ad*_{x_i} xi^j, i.e. <[x_i, xi^j], x_k> = -f_{ik}^j.
  const auto h = su2_structure(1.3);
  const auto a = cotangent_double(h);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Vector x = Vector::Zero(6), xi = Vector::Zero(6);
      x(i) = 1.0;
      xi(3 + j) = 1.0;
      const Vector br = a.bracket(x, xi);
      for (int k = 0; k < 3; ++k) {
        Vector xk = Vector::Zero(6);
        xk(k) = 1.0;
        EXPECT_NEAR(a.pairing(br, xk), -h.f(i, k, j), 1e-14);
      }
      EXPECT_NEAR(br.head(3).norm(), 0.0, 1e-14);
    }
}

TEST(Algebra, InvalidLieAlgebraRejected) {
  LieAlgebraData h{Tensor(3, 3)};
  // [e0,e1] = e2, [e1,e2] = e1, [e0,e2] = e0
  h.f(0, 1, 2) = 1.0;
  h.f(1, 0, 2) = -1.0;
  h.f(1, 2, 1) = 1.0;
  h.f(2, 1, 1) = -1.0;
  h.f(0, 2, 0) = 1.0;
  h.f(2, 0, 0) = -1.0;
  EXPECT_GT(jacobi_residual(h.f), 1e-6);
  EXPECT_THROW(cotangent_double(h), InvalidLieAlgebra);
}

TEST(Algebra, ComplexDoubleIsValid) {
  const auto a = complex_double_su2(0.7);
  const auto r = validate_algebra(a);
  EXPECT_TRUE(r.pass) << r.jacobi_residual;
  EXPECT_EQ(r.p, 3);
  EXPECT_EQ(r.q, 3);
}

TEST(Algebra, EveryPresetValidates) {
  for (int k = 0; k < 7; ++k) {
    const auto r = validate_algebra(preset_by_index(k, 1.7));
    EXPECT_TRUE(r.pass) << preset_label(k);
  }
}

TEST(Algebra, ChangeBasisIdentityAndScaling) {
  const auto a = so3(1.0);
  const auto same = change_basis(a, Matrix::Identity(3, 3));
  EXPECT_EQ(max_abs_diff(same.c(), a.c()), 0.0);
  EXPECT_EQ(max_abs(same.eta() - a.eta()), 0.0);

  const auto b = change_basis(a, 2.0 * Matrix::Identity(3, 3));
  EXPECT_NEAR(max_abs(b.eta() - 4.0 * Matrix::Identity(3, 3)), 0.0, 1e-15);
  EXPECT_NEAR(b.c()(0, 1, 2), 8.0, 1e-14);
  EXPECT_NEAR(b.c()(2, 1, 0), -8.0, 1e-14);
}

TEST(Algebra, ChangeBasisRejectsSingular) {
  Matrix P = Matrix::Identity(3, 3);
  P.col(2) = P.col(1);
  EXPECT_THROW(change_basis(so3(1.0), P), SingularBasis);
}

TEST(AlgebraProperty, RandomBasisKeepsJacobiAndRoundTrips) {
  const auto a = cotangent_double(su2_structure());
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    const Matrix P = Matrix::Identity(6, 6) + 0.2 * rng.normal_matrix(6, 6);
    const auto b = change_basis(a, P);
    EXPECT_LE(validate_algebra(b).jacobi_residual, 1e-10);
    const auto back = change_basis(b, P.inverse());
    EXPECT_LE(max_abs_diff(back.c(), a.c()), 1e-12);
    EXPECT_LE(max_abs(back.eta() - a.eta()), 1e-12);
  }
}

TEST(AlgebraProperty, NormInvariantUnderEtaOrthogonalChange) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    const auto a = preset_by_index(static_cast<int>(seed), rng.uniform(0.5, 2.0));
    const Matrix O = random_eta_antisymmetric(a, rng).exp();
    const auto b = change_basis(a, O);
    EXPECT_NEAR(b.c_norm2(), a.c_norm2(), 1e-10 * (1.0 + std::abs(a.c_norm2())));
  }
}

TEST(TensorProperty, RaiseLowerRoundTrip) {
  const auto inst = random_instance(3);
  Rng rng(5);
  const Tensor t = rng.normal_tensor(inst.algebra.n(), 3);
  for (int s = 0; s < 3; ++s) {
    const Tensor back = lower(raise(t, s, inst.algebra.eta_inv()), s, inst.algebra.eta());
    EXPECT_LE(max_abs_diff(back, t), 1e-12 * (1.0 + t.max_abs()));
    EXPECT_EQ(raise(t, s, inst.algebra.eta_inv()).variance(s), Variance::Upper);
  }
}

TEST(TensorProperty, PermuteSlotsConvention) {
  Rng rng(1);
  const Tensor t = rng.normal_tensor(3, 3);
  const Tensor s = permute_slots(t, {1, 2, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) EXPECT_EQ(s(i, j, k), t(k, i, j));
}
