#include "grf/curvature.hpp"
#include "grf/instances.hpp"

#include <gtest/gtest.h>

using namespace grf;

namespace {

Matrix su2_graph(const QuadraticLieAlgebra& a) {
  Matrix g = Matrix::Zero(3, 3);
  g.diagonal() << 1, 2, 3;
  return graph_metric(a, g, Matrix::Zero(3, 3)).G;
}

}  // namespace

TEST(Curvature, AbelianIsFlat) {
  const auto a = abelian(4, 2);
  Matrix G = Matrix::Identity(4, 4);
  G(2, 2) = G(3, 3) = -1.0;
  EXPECT_EQ(riemann(a, Connection{Tensor(4, 3)}).max_abs(), 0.0);
  EXPECT_EQ(max_abs(ricci(a, G)), 0.0);
  EXPECT_EQ(max_abs(ricci_closed_form(a, G)), 0.0);
  EXPECT_EQ(scalar(a, G), 0.0);
  EXPECT_EQ(dirac_square(a), 0.0);
  EXPECT_EQ(bianchi_residual(a, G), 0.0);
}

TEST(Curvature, So3AtIdentity) {
  const auto a = so3(1.0);
  const Matrix G = Matrix::Identity(3, 3);
  const Connection D{tau_prime(a, G, a.c())};
  EXPECT_LE(riemann_symmetry_residual(riemann(a, D)), 1e-12);
  EXPECT_NEAR((G * full_ricci(a, D)).trace(), 1.0, 1e-12);
  EXPECT_NEAR(scalar(a, G), 1.0, 1e-12);
  EXPECT_NEAR(scalar_closed_form(a, G), 1.0, 1e-12);
  EXPECT_LE(max_abs(ricci(a, G)), 1e-14);
  EXPECT_NEAR(dirac_square(a), -1.0 / 8.0, 1e-15);
}

TEST(Curvature, IdentityMetricHasZeroRicci) {
  const auto a = change_basis(direct_sum(so3(1.3), negate_pairing(so3(0.7))), Matrix::Identity(6, 6));
  const Matrix G = Matrix::Identity(6, 6);
  EXPECT_LE(max_abs(ricci_closed_form(a, G)), 1e-14);
  EXPECT_NEAR(scalar_closed_form(a, G), a.c_norm2() / 6.0, 1e-12);
}

TEST(Curvature, CotangentDoubleDiracSquareVanishes) {
  EXPECT_NEAR(dirac_square(cotangent_double(su2_structure(2.0))), 0.0, 1e-14);
}

TEST(Curvature, Su2DoubleRoutesAgree) {
  const auto a = cotangent_double(su2_structure());
  const Matrix G = su2_graph(a);
  const Matrix contraction = ricci(a, G);
  const Matrix bracket = ricci_bracket_trace(a, G);
  const Matrix closed = ricci_closed_form(a, G);
  const double scale = 1.0 + max_abs(contraction);
  EXPECT_GT(max_abs(contraction), 1e-2);
  EXPECT_LE(max_abs(contraction - bracket), 1e-10 * scale);
  EXPECT_LE(max_abs(contraction - closed), 1e-10 * scale);
  EXPECT_LE(max_abs(contraction * G + G * contraction), 1e-10 * scale);
  EXPECT_NEAR(scalar(a, G), scalar_closed_form(a, G), 1e-10);
  EXPECT_NEAR(scalar(a, G), scalar_polynomial(a, G, Vector::Zero(6)), 1e-10);
}

TEST(Curvature, ScalarDivergenceShift) {
  const auto a = cotangent_double(su2_structure());
  const Matrix G = su2_graph(a);
  Rng rng(5);
  const Vector e = rng.normal_vector(6);
  const double base = scalar(a, G);
  const double shifted = scalar(a, G, Divergence{a.eta() * e});
  EXPECT_NEAR(shifted, base - a.pairing(G * e, e), 1e-10 * (1 + std::abs(base)));
  EXPECT_NEAR(scalar_closed_form(a, G, Divergence{a.eta() * e}), shifted, 1e-10 * (1 + std::abs(base)));
  const auto ab = abelian(4, 2);
  Matrix Gi = Matrix::Identity(4, 4);
  Gi(2, 2) = Gi(3, 3) = -1.0;
  const Vector e4 = rng.normal_vector(4);
  EXPECT_NEAR(scalar_closed_form(ab, Gi, Divergence{ab.eta() * e4}), -ab.pairing(Gi * e4, e4), 1e-12);
}

TEST(Curvature, DivergenceShiftTrivialCases) {
  const auto a = cotangent_double(su2_structure());
  const Matrix G = su2_graph(a);
  EXPECT_LE(ricci_divergence_shift_residual(a, G, Vector::Zero(6)), 1e-14);
  const auto ab = abelian(4, 2);
  Matrix Gi = Matrix::Identity(4, 4);
  Gi(2, 2) = Gi(3, 3) = -1.0;
  EXPECT_EQ(ricci_divergence_shift_residual(ab, Gi, Vector::Ones(4)), 0.0);
  EXPECT_LE(ricci_divergence_shift_check(a, G, 3), 1e-10);
}

TEST(CurvatureProperty, ReportInvariants) {
  for (std::uint64_t seed = 0; seed < 21; ++seed) {
    const auto inst = random_instance(seed);
    const auto& a = inst.algebra;
    const CurvatureReport r = curvature_report(a, inst.G, Divergence{Vector::Zero(a.n())});
    const double rs = 1.0 + r.riemann.max_abs();
    const double cs = 1.0 + max_abs(r.ricci);
    EXPECT_LE(r.riemann_symmetry_residual, 1e-10 * rs) << inst.name;
    EXPECT_LE(max_abs(r.full_ricci - r.full_ricci.transpose()), 1e-10 * rs) << inst.name;
    EXPECT_LE(r.ricci_route_residual, 1e-10 * cs) << inst.name;
    EXPECT_LE(r.scalar_route_residual, 1e-10 * (1 + std::abs(r.scalar))) << inst.name;
    const Matrix low = a.eta() * r.ricci;
    EXPECT_LE(max_abs(low - low.transpose()), 1e-10 * cs) << inst.name;
    EXPECT_LE(max_abs(r.ricci * inst.G + inst.G * r.ricci), 1e-10 * cs) << inst.name;
    EXPECT_GE(r.ricci_norm2, -1e-10 * cs * cs) << inst.name;

    // Mixed trace GRm^{a b^}_{a b^} vanishes.
    const auto f = adapted_frame(a, inst.G);
    const Tensor Rf = riemann(f.algebra, levi_civita(f.algebra, f.G));
    double mixed = 0.0;
    for (int x = 0; x < f.n_plus; ++x)
      for (int y = f.n_plus; y < a.n(); ++y)
        mixed += f.algebra.eta_inv()(x, x) * f.algebra.eta_inv()(y, y) * Rf(x, y, x, y);
    EXPECT_LE(std::abs(mixed), 1e-10 * rs) << inst.name;
  }
}

TEST(CurvatureProperty, RicciNormIsBlockSum) {
  for (std::uint64_t seed = 0; seed < 14; ++seed) {
    const auto inst = random_instance(seed);
    const Matrix Rc = ricci_closed_form(inst.algebra, inst.G);
    const auto f = adapted_frame(inst.algebra, inst.G);
    const Matrix low = f.algebra.eta() * f.to_frame(Rc);
    double block = 0.0;
    for (int i = 0; i < f.n_plus; ++i)
      for (int j = f.n_plus; j < inst.algebra.n(); ++j) block += low(i, j) * low(i, j);
    const double nrm = ricci_norm2(inst.algebra, Rc);
    EXPECT_NEAR(nrm, 2.0 * block, 1e-12 * (1.0 + nrm)) << inst.name;
  }
}

TEST(CurvatureProperty, KernelShiftInvariance) {
  for (std::uint64_t seed = 0; seed < 14; ++seed) {
    const auto inst = random_instance(seed);
    const auto& a = inst.algebra;
    const Connection D = levi_civita(a, inst.G);
    const Matrix base = ricci_from_full(inst.G, full_ricci(a, D));
    const double gr = (inst.G * full_ricci(a, D)).trace();
    for (std::uint64_t k = 0; k < 3; ++k) {
      Connection D2 = D;
      D2.gamma += lc_kernel_shift(a, inst.G, 1000 * seed + k);
      const Matrix F2 = full_ricci(a, D2);
      EXPECT_LE(max_abs(ricci_from_full(inst.G, F2) - base), 1e-10 * (1 + max_abs(base))) << inst.name;
      EXPECT_NEAR((inst.G * F2).trace(), gr, 1e-10 * (1 + std::abs(gr))) << inst.name;
    }
  }
}

TEST(CurvatureProperty, Equivariance) {
  for (std::uint64_t seed = 0; seed < 14; ++seed) {
    const auto inst = random_instance(seed);
    const auto& a = inst.algebra;
    // phi = exp(ad_u) is an eta-orthogonal automorphism.
    Rng rng(seed + 9);
    const Matrix phi = (0.3 * a.ad(rng.normal_vector(a.n()))).exp();
    const Matrix Gphi = phi * inst.G * phi.inverse();
    const Matrix lhs = ricci(a, Gphi);
    const Matrix rhs = phi * ricci(a, inst.G) * phi.inverse();
    EXPECT_LE(max_abs(lhs - rhs), 1e-10 * (1 + max_abs(lhs))) << inst.name;
  }
}

TEST(CurvatureProperty, BianchiAndDivergenceShift) {
  for (std::uint64_t seed = 0; seed < 21; ++seed) {
    const auto inst = random_instance(seed);
    const auto& a = inst.algebra;
    const double rs = 1.0 + max_abs(ricci_closed_form(a, inst.G));
    EXPECT_LE(bianchi_residual(a, inst.G), 1e-10 * rs) << inst.name;
    Rng rng(seed + 5);
    const Vector e = rng.normal_vector(a.n());
    const double lie = max_abs(lie_derivative_metric(a, inst.G, inst.G * e).chi);
    EXPECT_LE(ricci_divergence_shift_residual(a, inst.G, e), 1e-10 * (rs + lie)) << inst.name;
    const double base = scalar(a, inst.G);
    const double shifted = scalar(a, inst.G, Divergence{a.eta() * e});
    EXPECT_NEAR(shifted - base, -a.pairing(inst.G * e, e), 1e-10 * (1 + std::abs(base) + e.squaredNorm()));
  }
}

TEST(CurvatureProperty, BracketTraceWithDivergence) {
  for (std::uint64_t seed = 0; seed < 14; ++seed) {
    const auto inst = random_instance(seed);
    const auto& a = inst.algebra;
    Rng rng(seed + 77);
    const Divergence d{rng.normal_vector(a.n())};
    const Matrix lhs = ricci(a, inst.G, d);
    EXPECT_LE(max_abs(lhs - ricci_bracket_trace(a, inst.G, d)), 1e-10 * (1 + max_abs(lhs))) << inst.name;
  }
}
