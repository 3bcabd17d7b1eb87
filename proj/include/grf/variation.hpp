#pragma once

#include "grf/curvature.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <optional>

namespace grf {

/// First-order data of a path (G_s, d_s): chi = dG/ds, eps = d(div)/ds (lowered).
/// When K is present the path is G_s = exp(sK) G exp(-sK) and chi = [K, G].
struct VariationInput {
  Matrix G;
  Vector d;
  MetricTangent chi;
  Vector eps;
  std::optional<Matrix> K;
};

inline VariationInput conjugation_path(const Matrix& G, const Vector& d, const Matrix& K, const Vector& eps) {
  return {G, d, MetricTangent{K * G - G * K}, eps, K};
}

inline Matrix conjugate(const Matrix& G, const Matrix& K, double s) {
  const Matrix E = (s * K).exp();
  const Matrix Einv = (-s * K).exp();
  return E * G * Einv;
}

/// dD/ds = 1/4 (1 - tau' tau - kappa' kappa)(D[G, chi]) + kappa'(eps), all lower indices.
inline Tensor connection_variation(const QuadraticLieAlgebra& a, const Matrix& G, const Connection& D,
                                   const MetricTangent& chi, const Vector& eps) {
  make_metric(a, G);
  const Tensor t = nabla(a, D, from_matrix(a.eta() * (G * chi.chi - chi.chi * G)));
  Tensor A = t;
  A -= tau_prime(a, G, tau(t));
  A -= kappa_prime(a, G, kappa(a, t));
  A *= 0.25;
  A += kappa_prime(a, G, eps);
  return A;
}

/// Blockwise evaluation in an adapted frame; returned in ambient coordinates.
inline Tensor connection_variation_blockwise(const QuadraticLieAlgebra& a, const Matrix& G, const Connection& D,
                                             const MetricTangent& chi, const Vector& eps) {
  const AdaptedFrame f = adapted_frame(a, G);
  const int n = a.n(), np = f.n_plus, nm = f.n_minus;
  if (np == 1 || nm == 1) throw ForbiddenRank("blockwise variation divides by n+ - 1 and n- - 1");
  const Matrix Qt = f.Q.transpose();
  auto to_frame = [&](const Tensor& t) {
    Tensor out = t;
    for (int s = 0; s < t.order(); ++s) out = contract_slot(out, s, Qt);
    return out;
  };
  const Tensor Dchi = to_frame(nabla(a, D, from_matrix(a.eta() * chi.chi)));
  const Vector e = Qt * eps;
  const Matrix& h = f.algebra.eta();
  const Matrix& hi = f.algebra.eta_inv();
  auto plus = [&](int i) { return i < np; };

  // Traces D^{b} chi_{c b} over the opposite eigenspace.
  Vector trp = Vector::Zero(n), trm = Vector::Zero(n);
  for (int c = 0; c < n; ++c)
    for (int b = 0; b < n; ++b)
      for (int m = 0; m < n; ++m) {
        const double v = hi(b, m) * Dchi(m, c, b);
        if (v == 0.0) continue;
        (plus(b) ? trp : trm)(c) += v;
      }

  Tensor A(n, 3);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        const bool px = plus(x), py = plus(y), pz = plus(z);
        double v = 0.0;
        if (px && py && pz) {
          v = 0.5 * (h(x, y) * trm(z) - h(x, z) * trm(y)) + (h(x, y) * e(z) - h(x, z) * e(y));
          v /= (np - 1);
        } else if (!px && !py && !pz) {
          v = -0.5 * (h(x, y) * trp(z) - h(x, z) * trp(y)) + (h(x, y) * e(z) - h(x, z) * e(y));
          v /= (nm - 1);
        } else if (px && py && !pz) {
          v = 0.5 * Dchi(x, y, z);
        } else if (!px && !py && pz) {
          v = -0.5 * Dchi(x, y, z);
        } else if (!px && py && !pz) {
          v = 0.5 * Dchi(x, y, z);
        } else if (px && !py && pz) {
          v = -0.5 * Dchi(x, y, z);
        } else if (!px && py && pz) {
          v = -0.5 * (Dchi(y, z, x) - Dchi(z, y, x));
        } else {
          v = 0.5 * (Dchi(y, z, x) - Dchi(z, y, x));
        }
        A(x, y, z) = v;
      }
  const Matrix Qinv_t = f.Q.inverse().transpose();
  Tensor out = A;
  for (int s = 0; s < 3; ++s) out = contract_slot(out, s, Qinv_t);
  return out;
}

/// Residuals of the three defining conditions of dD/ds.
struct ConnectionVariationResidual {
  double compatibility = 0.0;  ///< max |D_u chi + [A_u, G]|
  double torsion = 0.0;        ///< max |tau(A)|
  double divergence = 0.0;     ///< max |kappa(A) - eps|
};

inline ConnectionVariationResidual connection_variation_residual(const QuadraticLieAlgebra& a, const Matrix& G,
                                                                 const Connection& D, const MetricTangent& chi,
                                                                 const Vector& eps, const Tensor& A) {
  const int n = a.n();
  ConnectionVariationResidual r;
  const Tensor Dchi = nabla(a, D, from_matrix(a.eta() * chi.chi));
  for (int u = 0; u < n; ++u) {
    Matrix Au(n, n), Du(n, n);
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) {
        Au(x, y) = A(u, x, y);
        Du(x, y) = Dchi(u, x, y);
      }
    const Matrix Ae = a.eta_inv() * Au;
    r.compatibility = std::max(r.compatibility, max_abs(a.eta() * (a.eta_inv() * Du + Ae * G - G * Ae)));
  }
  r.torsion = tau(A).max_abs();
  r.divergence = max_abs(kappa(a, A) - eps);
  return r;
}

namespace detail {

/// (G eta^-1)^{ab} T_{ab..} contracted on the first two slots of a 4-tensor.
inline Matrix trace_first_two(const Matrix& W, const Tensor& T) {
  const int n = T.dim();
  Matrix out = Matrix::Zero(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) {
      const double w = W(p, q);
      if (w == 0.0) continue;
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) out(x, y) += w * T(p, q, x, y);
    }
  return out;
}

}  // namespace detail

/// A(chi)_{ab} = X_{ab} + X_{ba}, X_{ab} = 1/2 G^g_b ([D_d, D_g] chi_a^d - [D_d, D_a] chi_g^d).
inline Matrix ricci_variation_commutator_term(const QuadraticLieAlgebra& a, const Matrix& G, const Tensor& DDchi) {
  const int n = a.n();
  const Matrix& ei = a.eta_inv();
  // C(p, q, x) = eta^{dm} ([D_d, D_p] chi)_{x m}, with q unused slot removed.
  Matrix C1 = Matrix::Zero(n, n);  // C1(x, g) = eta^{dm} [D_d, D_g] chi_{x m}
  for (int x = 0; x < n; ++x)
    for (int g = 0; g < n; ++g) {
      double s = 0.0;
      for (int d = 0; d < n; ++d)
        for (int m = 0; m < n; ++m) {
          const double e = ei(d, m);
          if (e != 0.0) s += e * (DDchi(d, g, x, m) - DDchi(g, d, x, m));
        }
      C1(x, g) = s;
    }
  // X_{ab} = 1/2 sum_g G(g, b) (C1(a, g) - C1'(g, a)), C1'(g, a) = eta^{dm}[D_d, D_a] chi_{g m} = C1(g, a).
  Matrix X(n, n);
  for (int al = 0; al < n; ++al)
    for (int be = 0; be < n; ++be) {
      double s = 0.0;
      for (int g = 0; g < n; ++g) s += G(g, be) * (C1(al, g) - C1(g, al));
      X(al, be) = 0.5 * s;
    }
  return X + X.transpose();
}

/// dGRc/ds as an endomorphism.
inline Matrix ricci_variation(const QuadraticLieAlgebra& a, const Matrix& G, const Vector& d,
                              const MetricTangent& chi, const Vector& eps) {
  make_metric(a, G);
  const Connection D = levi_civita(a, G, Divergence{d});
  const Matrix& ei = a.eta_inv();
  const Matrix chil = a.eta() * chi.chi;
  const Tensor Dchi = nabla(a, D, from_matrix(chil));
  const Tensor DDchi = nabla(a, D, Dchi);
  const Matrix lap = a.eta_inv() * detail::trace_first_two(G * ei, DDchi);

  const int n = a.n();
  Vector tr = Vector::Zero(n);  // (Tr D chi)_b lowered = eta^{am} (D chi)_{a m b}
  for (int al = 0; al < n; ++al)
    for (int m = 0; m < n; ++m) {
      const double e = ei(al, m);
      if (e == 0.0) continue;
      for (int b = 0; b < n; ++b) tr(b) += e * Dchi(al, m, b);
    }
  const Vector u = ei * tr + G * ei * eps;
  const Matrix lie = lie_derivative_metric(a, G, u).chi;
  const Matrix comm = ei * ricci_variation_commutator_term(a, G, DDchi);
  const Matrix F = full_ricci(a, D);
  const Matrix Rc = ricci_from_full(G, F);
  return -0.5 * lap - 0.5 * lie + comm + chi.chi * G * Rc + G * (chi.chi * F - F * chi.chi);
}

/// dGR/ds.
inline double scalar_variation(const QuadraticLieAlgebra& a, const Matrix& G, const Vector& d,
                               const MetricTangent& chi, const Vector& eps) {
  make_metric(a, G);
  const Connection D = levi_civita(a, G, Divergence{d});
  const Matrix& ei = a.eta_inv();
  const Matrix Gu = G * ei;
  const Tensor DDchi = nabla(a, D, nabla(a, D, from_matrix(a.eta() * chi.chi)));
  const int n = a.n();
  double second = 0.0;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) second += Gu(p, x) * Gu(q, y) * DDchi(p, q, x, y);
  Tensor e(n, 1);
  for (int i = 0; i < n; ++i) e(i) = eps(i);
  const Matrix De = to_matrix(nabla(a, D, e));
  const double div = (Gu.array() * De.array()).sum();
  const Matrix Rc = ricci_from_full(G, full_ricci(a, D));
  const double pair = ((chi.chi * ei).array() * (a.eta() * Rc).array()).sum();
  return second - 2.0 * div + 0.5 * pair;
}

/// S(G, sigma) = GR(G, 0) sigma^2 over a point.
inline double eh_functional(const QuadraticLieAlgebra& a, const Matrix& G, double sigma) {
  if (!(sigma > 0.0)) throw NonPositiveHalfDensity("sigma must be positive");
  return scalar(a, G) * sigma * sigma;
}

/// (chi, psi)_{G,sigma} = -1/8 <chi, psi> sigma^2 over a point.
inline double l2_pairing_metric(const QuadraticLieAlgebra& a, const Matrix& chi, const Matrix& psi, double sigma) {
  return -0.125 * ((a.eta() * chi).array() * (psi * a.eta_inv()).array()).sum() * sigma * sigma;
}

/// (nu, mu)_{G,sigma} = -2 nu mu over a point.
inline double l2_pairing_density(double nu, double mu) { return -2.0 * nu * mu; }

/// |FD derivative of S along (G_s, sigma + s nu) - (-4 (chi, GRc) - (nu, GR sigma))|.
inline double eh_gradient_check(const QuadraticLieAlgebra& a, const Matrix& G, double sigma, std::uint64_t seed,
                                double s = 1e-4) {
  Rng rng(seed);
  const Matrix K = random_eta_antisymmetric(a, rng);
  const double nu = rng.normal();
  const Matrix chi = K * G - G * K;
  const double fd =
      (eh_functional(a, conjugate(G, K, s), sigma + s * nu) - eh_functional(a, conjugate(G, K, -s), sigma - s * nu)) /
      (2.0 * s);
  const Matrix Rc = ricci(a, G);
  const double grad = -4.0 * l2_pairing_metric(a, chi, Rc, sigma) - l2_pairing_density(nu, scalar(a, G) * sigma);
  return std::abs(fd - grad);
}

/// Central-difference errors on the fixed step ladder.
struct FdReport {
  std::array<double, 3> steps{1e-2, 1e-3, 1e-4};
  std::array<double, 3> errors{};
  double scale = 0.0;  ///< size of the analytic derivative
  /// errors[0] / errors[1]; about 100 for second-order agreement.
  double ratio() const { return errors[1] > 0.0 ? errors[0] / errors[1] : 0.0; }
};

inline FdReport ricci_fd_check(const QuadraticLieAlgebra& a, const VariationInput& in) {
  if (!in.K) throw ValidationError("MissingPath", "finite differences need the generator K");
  const Matrix analytic = ricci_variation(a, in.G, in.d, in.chi, in.eps);
  FdReport rep;
  rep.scale = max_abs(analytic);
  for (int i = 0; i < 3; ++i) {
    const double s = rep.steps[i];
    const Matrix fwd = ricci(a, conjugate(in.G, *in.K, s), Divergence{in.d + s * in.eps});
    const Matrix bwd = ricci(a, conjugate(in.G, *in.K, -s), Divergence{in.d - s * in.eps});
    rep.errors[i] = max_abs((fwd - bwd) / (2.0 * s) - analytic);
  }
  return rep;
}

inline FdReport scalar_fd_check(const QuadraticLieAlgebra& a, const VariationInput& in) {
  if (!in.K) throw ValidationError("MissingPath", "finite differences need the generator K");
  const double analytic = scalar_variation(a, in.G, in.d, in.chi, in.eps);
  FdReport rep;
  rep.scale = std::abs(analytic);
  for (int i = 0; i < 3; ++i) {
    const double s = rep.steps[i];
    const double fwd = scalar(a, conjugate(in.G, *in.K, s), Divergence{in.d + s * in.eps});
    const double bwd = scalar(a, conjugate(in.G, *in.K, -s), Divergence{in.d - s * in.eps});
    rep.errors[i] = std::abs((fwd - bwd) / (2.0 * s) - analytic);
  }
  return rep;
}

/// Random conjugation path at G with a random divergence and its variation.
inline VariationInput random_variation(const QuadraticLieAlgebra& a, const Matrix& G, std::uint64_t seed,
                                       bool with_divergence = true) {
  Rng rng(seed);
  const Matrix K = random_eta_antisymmetric(a, rng);
  const Vector d = with_divergence ? Vector(rng.normal_vector(a.n())) : Vector(Vector::Zero(a.n()));
  const Vector eps = with_divergence ? Vector(rng.normal_vector(a.n())) : Vector(Vector::Zero(a.n()));
  return conjugation_path(G, d, K, eps);
}

}  // namespace grf
