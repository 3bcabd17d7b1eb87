#pragma once

#include "grf/connection.hpp"

namespace grf {

/// GRm_{WZXY} = GRm(e_W, e_Z, e_X, e_Y).
inline Tensor riemann(const QuadraticLieAlgebra& a, const Connection& D) {
  const int n = a.n();
  std::vector<Tensor> first(n), comm(n);
  for (int z = 0; z < n; ++z) {
    Tensor zf(n, 1);
    for (int d = 0; d < n; ++d) zf(d) = a.eta()(d, z);
    first[z] = nabla(a, D, zf);
    const Tensor second = nabla(a, D, first[z]);
    comm[z] = second - swap_slots(second, 0, 1);
  }
  Tensor R(n, 4);
  const Matrix& ei = a.eta_inv();
  for (int w = 0; w < n; ++w)
    for (int z = 0; z < n; ++z)
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
          double q = 0.0;
          for (int al = 0; al < n; ++al)
            for (int mu = 0; mu < n; ++mu) {
              const double e = ei(al, mu);
              if (e != 0.0) q += e * first[x](al, y) * first[z](mu, w);
            }
          R(w, z, x, y) = 0.5 * (comm[z](x, y, w) + comm[x](z, w, y) - q);
        }
  return R;
}

/// fGRc_{vu} = eta^{am} GRm_{m v a u}, lowered.
inline Matrix full_ricci_lowered(const QuadraticLieAlgebra& a, const Tensor& R) {
  const int n = a.n();
  Matrix F = Matrix::Zero(n, n);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u)
      for (int al = 0; al < n; ++al)
        for (int mu = 0; mu < n; ++mu) {
          const double e = a.eta_inv()(al, mu);
          if (e != 0.0) F(v, u) += e * R(mu, v, al, u);
        }
  return F;
}

/// Full Ricci as an endomorphism fGRc^a_b.
inline Matrix full_ricci(const QuadraticLieAlgebra& a, const Connection& D) {
  return a.eta_inv() * full_ricci_lowered(a, riemann(a, D));
}

/// GRc = G [G, fGRc] = F - G F G, as an endomorphism.
inline Matrix ricci_from_full(const Matrix& G, const Matrix& F) { return F - G * F * G; }

inline Matrix ricci(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d) {
  return ricci_from_full(G, full_ricci(a, levi_civita(a, G, d)));
}

inline Matrix ricci(const QuadraticLieAlgebra& a, const Matrix& G) {
  return ricci(a, G, Divergence{Vector::Zero(a.n())});
}

/// <v-, GRc u+> = d(G[v-,u+]) - 2 Tr(x -> P+[P-[P+x, v-], u+]), symmetrized.
inline Matrix ricci_bracket_trace(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d) {
  make_metric(a, G);
  const int n = a.n();
  const Matrix Pp = proj_plus(G), Pm = proj_minus(G);
  std::vector<Matrix> adP(n), adM(n);
  for (int b = 0; b < n; ++b) {
    adP[b] = a.ad(Pp.col(b));
    adM[b] = a.ad(Pm.col(b));
  }
  Matrix B(n, n);
  for (int al = 0; al < n; ++al) {
    const Matrix left = Pm * adM[al];
    for (int be = 0; be < n; ++be) {
      const double tr = (Pp * adP[be] * left).trace();
      const Vector br = a.bracket(Pm.col(al), Pp.col(be));
      B(al, be) = d.d.dot(G * br) - 2.0 * tr;
    }
  }
  return a.eta_inv() * (B + B.transpose());
}

inline Matrix ricci_bracket_trace(const QuadraticLieAlgebra& a, const Matrix& G) {
  return ricci_bracket_trace(a, G, Divergence{Vector::Zero(a.n())});
}

namespace detail {

inline Tensor c_up(const QuadraticLieAlgebra& a) {
  return raise(raise(a.c_mixed(), 0, a.eta_inv()), 1, a.eta_inv());
}

/// sum over the last two slots: out(a,b) = X(a,..)·Y(b,..).
inline Matrix contract_last_two(const Tensor& X, const Tensor& Y) {
  const int n = X.dim();
  Matrix out(n, n);
  const std::size_t blk = static_cast<std::size_t>(n) * n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < blk; ++k) s += X.flat(i * blk + k) * Y.flat(j * blk + k);
      out(i, j) = s;
    }
  return out;
}

}  // namespace detail

/// Polynomial form of GRc in c and G; valid for any matrix G (used off-manifold by the flow).
inline Matrix ricci_closed_form(const QuadraticLieAlgebra& a, const Matrix& G) {
  const Tensor cu = detail::c_up(a);
  const Tensor& cl = a.c();
  const Matrix Gl = G.transpose();  // contracts against lower slots
  const Matrix t1 = detail::contract_last_two(cu, cl);
  const Matrix t2 = G * t1 * G;
  const Tensor X = contract_slot(contract_slot(cu, 1, G), 2, G);
  const Matrix t3 = detail::contract_last_two(X, cl);
  const Tensor Y = contract_slot(contract_slot(cl, 1, Gl), 2, Gl);
  const Matrix t4 = G * detail::contract_last_two(cu, Y) * G;
  return 0.25 * (t1 - t2 - t3 + t4);
}

/// GR = Tr(G fGRc).
inline double scalar(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d) {
  return (G * full_ricci(a, levi_civita(a, G, d))).trace();
}

inline double scalar(const QuadraticLieAlgebra& a, const Matrix& G) {
  return scalar(a, G, Divergence{Vector::Zero(a.n())});
}

/// Polynomial GR in the ambient frame: -d G eta^-1 d + 1/4 Tr(G c c) - 1/12 GGG cc.
inline double scalar_polynomial(const QuadraticLieAlgebra& a, const Matrix& G, const Vector& d) {
  const Tensor cu = detail::c_up(a);
  const Matrix Gl = G.transpose();
  const Matrix t1 = detail::contract_last_two(cu, a.c());  // c^{dbg} c_{abg} as (d, a)
  const Tensor ggg = contract_slot(contract_slot(contract_slot(a.c(), 0, Gl), 1, Gl), 2, Gl);
  double cubic = 0.0;
  for (std::size_t i = 0; i < cu.size(); ++i) cubic += ggg.flat(i) * cu.flat(i);
  const double quad = (G * t1).trace();
  return -d.dot(G * a.eta_inv() * d) + 0.25 * quad - cubic / 12.0;
}

/// Closed form evaluated in an adapted frame.
inline double scalar_closed_form(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d) {
  const AdaptedFrame f = adapted_frame(a, G);
  const Vector df = f.Q.transpose() * d.d;
  const QuadraticLieAlgebra& b = f.algebra;
  const int n = b.n();
  double div = 0.0;
  for (int al = 0; al < n; ++al) div += df(al) * df(al) * f.G(al, al) * b.eta_inv()(al, al);
  double quad = 0.0, cubic = 0.0;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        const double c = b.c()(x, y, z);
        const double cup = c * b.eta_inv()(x, x) * b.eta_inv()(y, y) * b.eta_inv()(z, z);
        quad += f.G(x, x) * c * cup;
        cubic += f.G(x, x) * f.G(y, y) * f.G(z, z) * c * cup;
      }
  return -div + 0.25 * quad - cubic / 12.0;
}

inline double scalar_closed_form(const QuadraticLieAlgebra& a, const Matrix& G) {
  return scalar_closed_form(a, G, Divergence{Vector::Zero(a.n())});
}

/// Constant by which the generating Dirac operator squares: -GR(Id, 0)/8.
inline double dirac_square(const QuadraticLieAlgebra& a) { return -a.c_norm2() / 48.0; }

/// |GRc|^2_G = -GRc^{ab} GRc_{ab}.
inline double ricci_norm2(const QuadraticLieAlgebra& a, const Matrix& Rc) { return norm2_G(a, Rc); }

inline double ricci_divergence_shift_residual(const QuadraticLieAlgebra& a, const Matrix& G, const Vector& e) {
  const Matrix shifted = ricci(a, G, Divergence{a.eta() * e});
  const Matrix base = ricci(a, G);
  const Matrix lie = lie_derivative_metric(a, G, G * e).chi;
  return max_abs(shifted - base + 0.5 * lie);
}

inline double ricci_divergence_shift_check(const QuadraticLieAlgebra& a, const Matrix& G, std::uint64_t seed) {
  Rng rng(seed);
  return ricci_divergence_shift_residual(a, G, rng.normal_vector(a.n()));
}

/// max_g |(G eta^-1)^{am} (D GRc)_{a m g}|, d = 0.
inline double bianchi_residual(const QuadraticLieAlgebra& a, const Matrix& G) {
  const Connection D = levi_civita(a, G);
  const Matrix Rc = ricci_from_full(G, full_ricci(a, D));
  const Tensor DR = nabla(a, D, from_matrix(a.eta() * Rc));
  const Matrix Gu = G * a.eta_inv();
  const int n = a.n();
  double worst = 0.0;
  for (int g = 0; g < n; ++g) {
    double s = 0.0;
    for (int x = 0; x < n; ++x)
      for (int m = 0; m < n; ++m) s += Gu(x, m) * DR(x, m, g);
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

struct CurvatureReport {
  Tensor riemann;
  Matrix full_ricci;  ///< lowered
  Matrix ricci;       ///< endomorphism GRc^a_b
  double scalar = 0.0;
  double ricci_norm2 = 0.0;
  double torsion_residual = 0.0;
  double ricci_route_residual = 0.0;   ///< contraction vs bracket trace vs closed form (d = 0)
  double scalar_route_residual = 0.0;  ///< trace vs closed form
  double riemann_symmetry_residual = 0.0;
};

inline double riemann_symmetry_residual(const Tensor& R) {
  const int n = R.dim();
  double r = 0.0;
  for (int w = 0; w < n; ++w)
    for (int z = 0; z < n; ++z)
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) {
          const double v = R(w, z, x, y);
          r = std::max(r, std::abs(v + R(z, w, x, y)));
          r = std::max(r, std::abs(v + R(w, z, y, x)));
          r = std::max(r, std::abs(v - R(y, x, z, w)));
        }
  return r;
}

inline CurvatureReport curvature_report(const QuadraticLieAlgebra& a, const Matrix& G, const Divergence& d) {
  CurvatureReport rep;
  const Connection D = levi_civita(a, G, d);
  rep.torsion_residual = torsion(a, D).max_abs();
  rep.riemann = riemann(a, D);
  rep.riemann_symmetry_residual = riemann_symmetry_residual(rep.riemann);
  rep.full_ricci = full_ricci_lowered(a, rep.riemann);
  const Matrix F = a.eta_inv() * rep.full_ricci;
  rep.ricci = ricci_from_full(G, F);
  rep.scalar = (G * F).trace();
  rep.ricci_norm2 = norm2_G(a, rep.ricci);
  const Matrix bt = ricci_bracket_trace(a, G, d);
  rep.ricci_route_residual = max_abs(bt - rep.ricci);
  if (d.d.isZero(0.0)) {
    const Matrix cf = ricci_closed_form(a, G);
    rep.ricci_route_residual = std::max({rep.ricci_route_residual, max_abs(cf - rep.ricci), max_abs(cf - bt)});
  }
  rep.scalar_route_residual = std::abs(rep.scalar - scalar_closed_form(a, G, d));
  return rep;
}

}  // namespace grf
