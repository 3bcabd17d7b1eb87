#include "grf/torus.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace grf;
using namespace grf::torus;

namespace {

constexpr double kPi = std::numbers::pi;

TorusGeometry geometry(int d, int N) {
  TorusGeometry g;
  g.d = d;
  g.N = N;
  return g;
}

std::array<double, 3> position(const TorusGeometry& geo, std::size_t p) {
  const auto c = geo.coords(p);
  return {c[0] * geo.h(), c[1] * geo.h(), c[2] * geo.h()};
}

TorusFieldState perturbed(int d, int N, double k, std::uint64_t seed, double eps, bool with_B = true,
                          bool with_phi = true) {
  TorusFieldState s = flat_state(geometry(d, N), k);
  for (const auto& m : random_modes(d, seed, eps, 6, with_B, with_phi)) apply_mode(s, m);
  return s;
}

double max_abs_vec(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Fourth-order Runge-Kutta on f' = k^2 / f^2 with a fine fixed step.
double reduced_ode(double k, double T, int steps = 20000) {
  auto rhs = [k](double f) { return k * k / (f * f); };
  double f = 1.0;
  const double h = T / steps;
  for (int i = 0; i < steps; ++i) {
    const double a = rhs(f), b = rhs(f + 0.5 * h * a), c = rhs(f + 0.5 * h * b), e = rhs(f + h * c);
    f += h / 6.0 * (a + 2 * b + 2 * c + e);
  }
  return f;
}

/// Conformally flat g = e^{2u} delta on T^3 with u = eps sin(x) cos(2y) + eps sin(z).
struct Conformal {
  double eps;
  double u(const std::array<double, 3>& x) const { return eps * (std::sin(x[0]) * std::cos(2 * x[1]) + std::sin(x[2])); }
  std::array<double, 3> du(const std::array<double, 3>& x) const {
    return {eps * std::cos(x[0]) * std::cos(2 * x[1]), -2 * eps * std::sin(x[0]) * std::sin(2 * x[1]),
            eps * std::cos(x[2])};
  }
  double hess(const std::array<double, 3>& x, int i, int j) const {
    const double s0 = std::sin(x[0]), c0 = std::cos(x[0]), s1 = std::sin(2 * x[1]), c1 = std::cos(2 * x[1]);
    const double H[3][3] = {{-eps * s0 * c1, -2 * eps * c0 * s1, 0},
                            {-2 * eps * c0 * s1, -4 * eps * s0 * c1, 0},
                            {0, 0, -eps * std::sin(x[2])}};
    return H[i][j];
  }
};

TorusFieldState conformal_state(int N, const Conformal& cf) {
  TorusFieldState s = flat_state(geometry(3, N));
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
    const double w = std::exp(2 * cf.u(position(s.geo, p)));
    for (int i = 0; i < 3; ++i) s.gij(p, i, i) = w;
  }
  return s;
}

/// Max nodewise error of the Ricci tensor against Rc_ij = -(u_ij - u_i u_j) - (Lap u + |du|^2) delta_ij.
double conformal_ricci_error(int N, const Conformal& cf) {
  const TorusFieldState s = conformal_state(N, cf);
  const auto geo = node_geometries(s, Stencil(s.geo));
  double err = 0.0;
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
    const auto x = position(s.geo, p);
    const auto du = cf.du(x);
    double lap = 0.0, g2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      lap += cf.hess(x, i, i);
      g2 += du[i] * du[i];
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double expect = -(cf.hess(x, i, j) - du[i] * du[j]) - (i == j ? lap + g2 : 0.0);
        err = std::max(err, std::abs(geo[p].Ric[i][j] - expect));
      }
    const double R = std::exp(-2 * cf.u(x)) * (-4 * lap - 2 * g2);
    err = std::max(err, std::abs(geo[p].R - R));
  }
  return err;
}

/// Max over shared nodes of the field difference between a grid and its refinement.
double grid_difference(const TorusFieldState& coarse, const TorusFieldState& fine) {
  const int r = fine.geo.N / coarse.geo.N, d = coarse.d();
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  double e = 0.0;
  for (std::size_t p = 0; p < coarse.geo.nodes(); ++p) {
    auto c = coarse.geo.coords(p);
    for (int a = 0; a < d; ++a) c[a] *= r;
    const std::size_t q = fine.geo.index(c);
    for (std::size_t k = 0; k < dd; ++k) {
      e = std::max(e, std::abs(coarse.g[p * dd + k] - fine.g[q * dd + k]));
      e = std::max(e, std::abs(coarse.B[p * dd + k] - fine.B[q * dd + k]));
    }
    e = std::max(e, std::abs(coarse.phi[p] - fine.phi[q]));
  }
  return e;
}

}  // namespace

TEST(Stencil, FourthOrderAccuracy) {
  double e1[2], e2[2], em[2];
  for (int r = 0; r < 2; ++r) {
    const TorusGeometry geo = geometry(2, r == 0 ? 16 : 32);
    const Stencil st(geo);
    std::vector<double> f(geo.nodes());
    for (std::size_t p = 0; p < f.size(); ++p) {
      const auto x = position(geo, p);
      f[p] = std::sin(x[0]) * std::cos(2 * x[1]);
    }
    e1[r] = e2[r] = em[r] = 0.0;
    const auto H = st.hessian(f, 1);
    for (std::size_t p = 0; p < f.size(); ++p) {
      const auto x = position(geo, p);
      e1[r] = std::max(e1[r], std::abs(st.d1(f, 1, 0, p, 1) + 2 * std::sin(x[0]) * std::sin(2 * x[1])));
      e2[r] = std::max(e2[r], std::abs(st.d2(f, 1, 0, p, 0) + std::sin(x[0]) * std::cos(2 * x[1])));
      em[r] = std::max(em[r], std::abs(H[(p * 2 + 0) * 2 + 1] + 2 * std::cos(x[0]) * std::sin(2 * x[1])));
    }
  }
  EXPECT_NEAR(e1[0] / e1[1], 16.0, 1.5);
  EXPECT_NEAR(e2[0] / e2[1], 16.0, 1.5);
  EXPECT_NEAR(em[0] / em[1], 16.0, 2.0);
}

TEST(FluxH, ConstantCases) {
  TorusFieldState s = flat_state(geometry(3, 8), 0.7);
  std::vector<double> H = flux_H(s);
  EXPECT_NEAR(H[0 * 27 + (0 * 3 + 1) * 3 + 2], 0.7, 1e-15);
  EXPECT_NEAR(H[0 * 27 + (1 * 3 + 0) * 3 + 2], -0.7, 1e-15);
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
    s.Bij(p, 0, 1) = 2.5;
    s.Bij(p, 1, 0) = -2.5;
  }
  const std::vector<double> H2 = flux_H(s);
  double d = 0.0;
  for (std::size_t i = 0; i < H.size(); ++i) d = std::max(d, std::abs(H[i] - H2[i]));
  EXPECT_LE(d, 1e-14);
  EXPECT_EQ(max_abs_vec(flux_H(flat_state(geometry(2, 8)))), 0.0);
}

TEST(FluxH, MatchesExteriorDerivativeAndIsAntisymmetric) {
  const TorusFieldState s = perturbed(3, 8, 0.4, 5, 0.2);
  const std::vector<double> H = flux_H(s);
  const FormGrid fg(3, 8, s.geo.L);
  std::vector<std::vector<double>> B(3, std::vector<double>(s.geo.nodes()));
  const auto pairs = fg.tuples(2);
  for (std::size_t c = 0; c < pairs.size(); ++c)
    for (std::size_t p = 0; p < s.geo.nodes(); ++p) B[c][p] = s.Bij(p, pairs[c][0], pairs[c][1]);
  const auto dB = fg.exterior_derivative(B, 2);
  ASSERT_EQ(dB.size(), 1u);
  double err = 0.0, asym = 0.0;
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
    err = std::max(err, std::abs(H[p * 27 + 5] - 0.4 - dB[0][p]));
    const double* h = &H[p * 27];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          asym = std::max({asym, std::abs(h[(i * 3 + j) * 3 + k] + h[(j * 3 + i) * 3 + k]),
                           std::abs(h[(i * 3 + j) * 3 + k] + h[(i * 3 + k) * 3 + j])});
  }
  EXPECT_LE(err, 1e-13);
  EXPECT_EQ(asym, 0.0);
}

TEST(ExteriorDerivative, SquareVanishesOnT4) {
  const int N = 8;
  const FormGrid fg(4, N, 2 * kPi);
  Rng rng(17);
  for (int k : {1, 2}) {
    std::vector<std::vector<double>> w(fg.tuples(k).size(), std::vector<double>(fg.nodes()));
    for (auto& comp : w)
      for (double& x : comp) x = rng.normal();
    const auto dw = fg.exterior_derivative(w, k);
    const auto ddw = fg.exterior_derivative(dw, k + 1);
    double scale = 0.0, res = 0.0;
    for (const auto& c : dw) scale = std::max(scale, max_abs_vec(c));
    for (const auto& c : ddw) res = std::max(res, max_abs_vec(c));
    EXPECT_GT(scale, 1.0);
    EXPECT_LE(res, 1e-13 * scale) << "degree " << k;
  }
  // B_01 = sin(x3) on T^4.
  std::vector<std::vector<double>> B(6, std::vector<double>(fg.nodes(), 0.0));
  for (std::size_t p = 0; p < fg.nodes(); ++p) B[0][p] = std::sin(2 * kPi * static_cast<double>(p % N) / N);
  const auto ddB = fg.exterior_derivative(fg.exterior_derivative(B, 2), 3);
  for (const auto& c : ddB) EXPECT_LE(max_abs_vec(c), 1e-14);
}

TEST(TorusRhs, FlatIsStationary) {
  for (int d : {2, 3}) {
    const TorusRhs r = torus_rhs(flat_state(geometry(d, 8)));
    EXPECT_EQ(max_abs_vec(r.dg), 0.0);
    EXPECT_EQ(max_abs_vec(r.dB), 0.0);
    EXPECT_EQ(max_abs_vec(r.dphi), 0.0);
  }
}

TEST(TorusRhs, FlatWithFlux) {
  const double k = 1.3;
  TorusFieldState s = flat_state(geometry(3, 8), k);
  for (double& x : s.phi) x = 0.4;
  const TorusRhs r = torus_rhs(s);
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.dg[p * 9 + i * 3 + j], i == j ? k * k : 0.0, 1e-13);
    EXPECT_NEAR(r.dphi[p], k * k / 2, 1e-13);
  }
  EXPECT_LE(max_abs_vec(r.dB), 1e-13);
}

TEST(TorusRhs, IsotropicScaleStaysIsotropic) {
  TorusFieldState s = flat_state(geometry(3, 8), 1.0);
  for (double& x : s.g) x *= 1.7;
  const TorusRhs r = torus_rhs(s);
  EXPECT_NEAR(r.dg[0], 1.0 / (1.7 * 1.7), 1e-13);
  for (std::size_t p = 0; p < s.geo.nodes(); ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.dg[p * 9 + i * 3 + j], i == j ? r.dg[0] : 0.0, 1e-13);
}

TEST(TorusRhs, DegenerateMetricIsRejected) {
  TorusFieldState s = flat_state(geometry(3, 8));
  s.gij(3, 2, 2) = 1e-9;
  EXPECT_THROW(torus_rhs(s), DegenerateMetric);
  EXPECT_THROW(generalized_scalar_field(s), DegenerateMetric);
  EXPECT_THROW(flat_state(geometry(2, 8), 1.0), ValidationError);
  EXPECT_THROW(flat_state(geometry(4, 8)), ValidationError);
}

TEST(TorusRhs, RightSidesHaveExactSymmetry) {
  const TorusFieldState s = perturbed(3, 8, 0.5, 9, 0.15);
  const TorusRhs r = torus_rhs(s);
  for (std::size_t p = 0; p < s.geo.nodes(); ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        EXPECT_EQ(r.dg[p * 9 + i * 3 + j], r.dg[p * 9 + j * 3 + i]);
        EXPECT_EQ(r.dB[p * 9 + i * 3 + j], -r.dB[p * 9 + j * 3 + i]);
      }
}

TEST(Curvature, ConformallyFlatOracle) {
  const Conformal cf{0.1};
  const double e16 = conformal_ricci_error(16, cf), e32 = conformal_ricci_error(32, cf);
  EXPECT_LE(e32, 3e-3);
  EXPECT_GE(e16 / e32, 12.0);
}

TEST(GeneralizedScalar, Oracles) {
  EXPECT_EQ(max_abs_vec(generalized_scalar_field(flat_state(geometry(3, 8)))), 0.0);
  for (double x : generalized_scalar_field(flat_state(geometry(3, 8), 1.5))) EXPECT_NEAR(x, -1.125, 1e-13);
  // phi = eps sin(x): -4 e^phi Lap e^-phi = -4 (phi'^2 - phi'').
  for (double eps : {1e-2, 1e-3}) {
    TorusFieldState s = flat_state(geometry(2, 32));
    for (std::size_t p = 0; p < s.geo.nodes(); ++p) s.phi[p] = eps * std::sin(position(s.geo, p)[0]);
    const auto GR = generalized_scalar_field(s);
    double err = 0.0, mean = 0.0;
    for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
      const double x = position(s.geo, p)[0];
      const double expect = -4 * (eps * eps * std::cos(x) * std::cos(x) + eps * std::sin(x));
      err = std::max(err, std::abs(GR[p] - expect));
      mean += GR[p] / s.geo.nodes();
    }
    EXPECT_LE(err, 1e-3 * eps);
    EXPECT_LE(std::abs(mean), 3 * eps * eps);
  }
}

TEST(Lambda, IdentityAgainstDirectEvaluation) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const TorusFieldState s = perturbed(3, 8, 0.3 * seed, 40 + seed, 0.2);
    EXPECT_LE(lambda_identity_residual(s, Stencil(s.geo)), 1e-12) << seed;
  }
  const TorusFieldState s2 = perturbed(2, 16, 0.0, 3, 0.2);
  EXPECT_LE(lambda_identity_residual(s2, Stencil(s2.geo)), 1e-12);
}

TEST(Lambda, ConstantPotential) {
  EXPECT_NEAR(lambda_torus(flat_state(geometry(2, 16))).lambda, 0.0, 1e-12);
  EXPECT_NEAR(lambda_torus(flat_state(geometry(3, 8))).lambda, 0.0, 1e-12);
  for (double k : {1.0, 0.6}) EXPECT_NEAR(lambda_torus(flat_state(geometry(3, 8), k)).lambda, -k * k / 2, 1e-6);
}

TEST(Lambda, BracketedByPotentialAndTestFunctions) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TorusFieldState s = perturbed(3, 8, 0.5, 60 + seed, 0.15);
    const Stencil st(s.geo);
    const LambdaResult lr = lambda_torus(s, st);
    const auto geo = node_geometries(s, st);
    const auto V = scalar_potential(s, st, geo);
    const auto GR = generalized_scalar_field(s, st);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < V.size(); ++p) {
      const double u2 = std::exp(-2 * s.phi[p]) * geo[p].sqrt_det;
      num += GR[p] * u2;
      den += u2;
    }
    EXPECT_GE(lr.lambda, *std::min_element(V.begin(), V.end()) - 1e-12);
    EXPECT_LE(lr.lambda, num / den + 1e-12);
    for (double x : lr.u) EXPECT_GT(x, 0.0);
    double mass = 0.0;
    for (std::size_t p = 0; p < V.size(); ++p) mass += lr.u[p] * lr.u[p] * geo[p].sqrt_det * std::pow(s.geo.h(), 3);
    EXPECT_NEAR(mass, 1.0, 1e-12);
  }
}

TEST(Lambda, StallIsReported) {
  const TorusFieldState s = perturbed(3, 8, 0.5, 61, 0.15);
  LambdaParams lp;
  lp.max_iterations = 2;
  EXPECT_THROW(lambda_torus(s, Stencil(s.geo), lp), EigensolverStalled);
}

TEST(TorusFlow, HomogeneousFluxBenchmark) {
  TorusParams p;
  p.T = 1.0;
  const TorusTrace tr = run_torus_flow(flat_state(geometry(3, 16), 1.0), p);
  const double f = benchmark_scale(1.0, 1.0);
  EXPECT_NEAR(f, reduced_ode(1.0, 1.0), 1e-12);
  const auto& s = tr.final_state;
  for (std::size_t n = 0; n < s.geo.nodes(); ++n)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ASSERT_NEAR(s.gij(n, i, j), i == j ? f : 0.0, 1e-4 * f);
  for (const auto& x : tr.samples) {
    EXPECT_NEAR(x.minR, -1.0 / (2 * (1 + 3 * x.t)), 1e-4);
    EXPECT_NEAR(x.lambda, -1.0 / (2 * (1 + 3 * x.t)), 1e-4);
  }
  EXPECT_GE(tr.diagnostics.worst_lambda_rate, -1e-6);
  EXPECT_GE(tr.diagnostics.worst_minR_rate, -1e-6);
  EXPECT_LE(tr.diagnostics.max_g_asymmetry, 1e-12);
  EXPECT_LE(tr.diagnostics.max_B_symmetric_part, 1e-12);
  EXPECT_DOUBLE_EQ(s.t, 1.0);
}

TEST(TorusFlow, RicciDilatonRegression) {
  const TorusFieldState s = perturbed(3, 8, 0.0, 21, 0.1, false, true);
  const Stencil st(s.geo);
  const TorusRhs a = torus_rhs(s, st), b = ricci_dilaton_rhs(s, st);
  EXPECT_EQ(max_abs_vec(a.dB), 0.0);
  double e = 0.0;
  for (std::size_t i = 0; i < a.dg.size(); ++i) e = std::max(e, std::abs(a.dg[i] - b.dg[i]));
  for (std::size_t i = 0; i < a.dphi.size(); ++i) e = std::max(e, std::abs(a.dphi[i] - b.dphi[i]));
  EXPECT_LE(e, 1e-12);
  TorusParams p;
  p.T = 0.05;
  p.compute_lambda = false;
  const TorusTrace ta = run_torus_flow(s, p);
  p.ricci_dilaton_only = true;
  const TorusTrace tb = run_torus_flow(s, p);
  EXPECT_LE(grid_difference(ta.final_state, tb.final_state), 1e-12);
}

TEST(TorusFlow, PerturbedFlatT2Decays) {
  TorusFieldState s = flat_state(geometry(2, 16));
  apply_mode(s, {PerturbationMode::Field::g, 0, 0, 0.1, {1, 1, 0}, 0.2});
  apply_mode(s, {PerturbationMode::Field::g, 0, 1, 0.05, {0, 1, 0}, 0.0});
  TorusParams p;
  p.T = 2.0;
  p.record_every = 10;
  const TorusTrace tr = run_torus_flow(s, p);
  EXPECT_GE(tr.diagnostics.worst_minR_rate, -1e-6);
  EXPECT_GE(tr.diagnostics.worst_lambda_rate, -1e-6);
  EXPECT_LE(tr.diagnostics.max_g_asymmetry, 1e-12);
  EXPECT_LT(tr.samples.front().minR, -0.01);
  auto spread = [](const TorusFieldState& x) {
    const auto R = generalized_scalar_field(x);
    return *std::max_element(R.begin(), R.end()) - *std::min_element(R.begin(), R.end());
  };
  EXPECT_LT(spread(tr.final_state), 0.2 * spread(s));
  EXPECT_EQ(max_abs_vec(tr.final_state.phi), 0.0);
}

TEST(TorusFlow, SpatialConvergenceOrder) {
  auto make = [](int N) {
    TorusFieldState s = flat_state(geometry(3, N), 1.0);
    apply_mode(s, {PerturbationMode::Field::g, 0, 1, 0.1, {1, 0, 0}, 0.3});
    apply_mode(s, {PerturbationMode::Field::g, 2, 2, 0.1, {0, 1, 1}, 0.0});
    apply_mode(s, {PerturbationMode::Field::B, 0, 1, 0.1, {0, 0, 1}, 0.0});
    apply_mode(s, {PerturbationMode::Field::phi, 0, 0, 0.1, {1, 1, 0}, 0.0});
    return s;
  };
  TorusParams p;
  p.T = 0.05;
  p.compute_lambda = false;
  p.record_every = 1 << 30;
  p.dt_override = 0.25 * stable_dt(make(32), p.c_cfl);
  const auto a = run_torus_flow(make(8), p).final_state;
  const auto b = run_torus_flow(make(16), p).final_state;
  const auto c = run_torus_flow(make(32), p).final_state;
  const double ratio = grid_difference(a, b) / grid_difference(b, c);
  EXPECT_GE(ratio, 11.3);
  EXPECT_LE(ratio, 22.6);
}

TEST(TorusFlow, DegenerateMetricAbortsCleanly) {
  TorusFieldState s = flat_state(geometry(2, 8));
  s.gij(5, 1, 1) = 5e-9;
  TorusParams p;
  p.T = 1.0;
  p.compute_lambda = false;
  const TorusTrace tr = try_run_torus_flow(s, p);
  EXPECT_FALSE(tr.completed);
  EXPECT_EQ(tr.status, "DegenerateMetric");
  EXPECT_THROW(run_torus_flow(s, p), DegenerateMetric);
}

TEST(TorusFlow, ParameterValidation) {
  TorusParams p;
  p.T = 0.0;
  EXPECT_THROW(validate_params(p), ValidationError);
  p = TorusParams{};
  p.record_every = 0;
  EXPECT_THROW(validate_params(p), ValidationError);
  TorusGeometry g = geometry(3, 7);
  EXPECT_THROW(validate_geometry(g), ValidationError);
}

TEST(FieldDump, HeaderLayout) {
  const TorusFieldState s = perturbed(3, 8, 1.0, 2, 0.1);
  const std::string path = (std::filesystem::temp_directory_path() / "grf_dump_test.bin").string();
  write_field_dump(s, path);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  std::uint32_t hdr[4];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  EXPECT_EQ(std::string(magic, 4), "GRFF");
  EXPECT_EQ(hdr[0], 1u);
  EXPECT_EQ(hdr[1], 3u);
  EXPECT_EQ(hdr[2], 8u);
  EXPECT_EQ(hdr[3], 10u);
  std::vector<double> field(s.geo.nodes());
  in.read(reinterpret_cast<char*>(field.data()), field.size() * sizeof(double));
  EXPECT_EQ(field[5], s.gij(5, 0, 0));
  EXPECT_EQ(std::filesystem::file_size(path), 4 + 16 + 10 * s.geo.nodes() * 8);
  std::filesystem::remove(path);
}
