#pragma once

#include "grf/metric.hpp"

namespace grf {

/// gamma(a,b,g) = <e_b, D_{e_a} e_g>; antisymmetric in the last two slots.
struct Connection {
  Tensor gamma;
};

/// Divergence covector: div(u) = d_a u^a.
struct Divergence {
  Vector d;
};

/// Totally antisymmetric 3-tensor with standard normal independent entries.
inline Tensor random_antisymmetric(int n, Rng& rng) {
  Tensor t(n, 3);
  for (int x = 0; x < n; ++x)
    for (int y = x + 1; y < n; ++y)
      for (int z = y + 1; z < n; ++z) set_antisymmetric(t, x, y, z, rng.normal());
  return t;
}

/// Lowered-slot action of an endomorphism M: (M t)_{..m..} = (eta M eta^-1)_{mn} t_{..n..}.
inline Matrix lowered_action(const QuadraticLieAlgebra& a, const Matrix& M) {
  return a.eta() * M * a.eta_inv();
}

inline Tensor torsion(const QuadraticLieAlgebra& a, const Connection& D) {
  const int n = a.n();
  const Tensor& g = D.gamma;
  Tensor T(n, 3);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z)
        T(x, y, z) = g(x, z, y) - g(y, z, x) - a.c()(x, y, z) + g(z, y, x);
  return T;
}

/// tau(A)_{abg} = -(A_{abg} + A_{bga} + A_{gab}).
inline Tensor tau(const Tensor& A) {
  const int n = A.dim();
  Tensor T(n, 3);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) T(x, y, z) = -(A(x, y, z) + A(y, z, x) + A(z, x, y));
  return T;
}

/// kappa(A)_g = eta^{ab} A_{abg}, returned lowered.
inline Vector kappa(const QuadraticLieAlgebra& a, const Tensor& A) {
  const int n = a.n();
  Vector k = Vector::Zero(n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      const double e = a.eta_inv()(x, y);
      if (e == 0.0) continue;
      for (int z = 0; z < n; ++z) k(z) += e * A(x, y, z);
    }
  return k;
}

inline Divergence divergence_of(const QuadraticLieAlgebra& a, const Connection& D) {
  return {kappa(a, D.gamma)};
}

inline Tensor tau_prime(const QuadraticLieAlgebra& a, const Matrix& G, const Tensor& t) {
  const Matrix Gl = lowered_action(a, G);
  const Tensor s = contract_slot(contract_slot(t, 0, Gl), 1, Gl);
  const Tensor tgg = contract_slot(contract_slot(t, 1, Gl), 2, Gl);
  Tensor out = t;
  out += 0.5 * (swap_slots(s, 1, 2) - s);
  out += tgg;
  out *= -1.0 / 3.0;
  return out;
}

inline Tensor kappa_prime(const QuadraticLieAlgebra& a, const Matrix& G, const Vector& u) {
  const int n = a.n();
  const MetricReport r = validate_metric(a, G);
  if (r.n_plus == 1 || r.n_minus == 1) throw ForbiddenRank("kappa' divides by n+ - 1 and n- - 1");
  Tensor out(n, 3);
  const Matrix P[2] = {proj_plus(G), proj_minus(G)};
  const int rank[2] = {r.n_plus, r.n_minus};
  for (int s = 0; s < 2; ++s) {
    if (rank[s] == 0) continue;
    const Matrix pi = a.eta() * P[s];
    const Vector us = P[s].transpose() * u;
    const double f = 1.0 / (rank[s] - 1);
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y)
        for (int z = 0; z < n; ++z) out(x, y, z) += f * (pi(x, y) * us(z) - pi(x, z) * us(y));
  }
  return out;
}

/// One repair pass: subtract tau'(T), then fix the divergence.
inline Connection lc_repair(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d,
                            Connection D) {
  D.gamma -= tau_prime(a, G, torsion(a, D));
  D.gamma += kappa_prime(a, G, d.d - kappa(a, D.gamma));
  return D;
}

inline Connection levi_civita(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d) {
  make_metric(a, G);
  return lc_repair(a, G, d, Connection{Tensor(a.n(), 3)});
}

inline Connection levi_civita(const QuadraticLieAlgebra& a, const Matrix& G) {
  return levi_civita(a, G, Divergence{Vector::Zero(a.n())});
}

inline long binomial2(long k) { return k * (k - 1) / 2; }

/// dim of ker tau, ker kappa inside E (x) (L2 V+ + L2 V-), for n+, n- not equal to 1.
inline long lc_kernel_dimension(int n_plus, int n_minus) {
  const long n = n_plus + n_minus;
  return n * (binomial2(n_plus) + binomial2(n_minus)) - n * (n - 1) * (n - 2) / 6 - n;
}

/// Projects slots 1,2 of A onto L2 V+ + L2 V- (lowered action).
inline Tensor project_block_diagonal(const QuadraticLieAlgebra& a, const Matrix& G, const Tensor& A) {
  const Matrix Pp = lowered_action(a, proj_plus(G)), Pm = lowered_action(a, proj_minus(G));
  return contract_slot(contract_slot(A, 1, Pp), 2, Pp) + contract_slot(contract_slot(A, 1, Pm), 2, Pm);
}

inline Tensor lc_kernel_shift(const QuadraticLieAlgebra& a, const Matrix& G, std::uint64_t seed) {
  const GeneralizedPseudometric gm = make_metric(a, G);
  const int n = a.n();
  if (lc_kernel_dimension(gm.n_plus, gm.n_minus) <= 0) return Tensor(n, 3);
  Rng rng(seed);
  Tensor A = rng.normal_tensor(n, 3);
  A = 0.5 * (A - swap_slots(A, 1, 2));
  A = project_block_diagonal(a, G, A);
  A -= tau_prime(a, G, tau(A));
  A -= kappa_prime(a, G, kappa(a, A));
  return A;
}

/// Largest violation of the LC-kernel constraints.
inline double lc_constraint_residual(const QuadraticLieAlgebra& a, const Matrix& G, const Tensor& A) {
  double r = max_abs_diff(A, -1.0 * swap_slots(A, 1, 2));
  r = std::max(r, max_abs_diff(A, project_block_diagonal(a, G, A)));
  r = std::max(r, tau(A).max_abs());
  r = std::max(r, max_abs(kappa(a, A)));
  return r;
}

/// Covariant derivative of an all-lower tensor; new slot first.
/// (Dt)_{a b1..bk} = -sum_i Gamma_a^m_{bi} t_{..m..}.
inline Tensor nabla(const QuadraticLieAlgebra& a, const Connection& D, const Tensor& t) {
  const int n = a.n(), k = t.order();
  const Tensor Gup = raise(D.gamma, 1, a.eta_inv());
  Tensor out(n, k + 1);
  const std::size_t block = t.size();
  for (int x = 0; x < n; ++x) {
    Matrix Mx(n, n);  // Mx(b, m) = -Gamma_x^m_b
    for (int b = 0; b < n; ++b)
      for (int m = 0; m < n; ++m) Mx(b, m) = -Gup(x, m, b);
    Tensor acc(n, k);
    for (int s = 0; s < k; ++s) acc += contract_slot(t, s, Mx);
    std::copy(acc.data(), acc.data() + block, out.data() + x * block);
  }
  return out;
}

}  // namespace grf
