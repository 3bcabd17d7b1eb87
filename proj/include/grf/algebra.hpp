#pragma once

#include "grf/errors.hpp"
#include "grf/tensor.hpp"

#include <Eigen/Eigenvalues>

#include <string>
#include <utility>

namespace grf {

/// Pairing eta and all-lower structure tensor c_{abg} = <[e_a,e_b],e_g>.
class QuadraticLieAlgebra {
 public:
  QuadraticLieAlgebra() = default;
  QuadraticLieAlgebra(Matrix eta, Tensor c) : eta_(std::move(eta)), c_(std::move(c)) {
    n_ = static_cast<int>(eta_.rows());
    if (eta_.cols() != n_ || c_.dim() != n_ || c_.order() != 3)
      throw ValidationError("ShapeMismatch", "eta must be n x n and c must be n x n x n");
    const double scale = std::max(max_abs(eta_), 1e-300);
    const double rel_det = std::abs((eta_ / scale).determinant());
    if (!(rel_det >= 1e-12))
      throw NonInvertiblePairing("relative |det eta| = " + std::to_string(rel_det));
    eta_inv_ = eta_.inverse();
    c_mixed_ = raise(c_, 2, eta_inv_);
  }

  int n() const { return n_; }
  const Matrix& eta() const { return eta_; }
  const Matrix& eta_inv() const { return eta_inv_; }
  /// c_{abg}, all indices down.
  const Tensor& c() const { return c_; }
  /// c_{ab}^g.
  const Tensor& c_mixed() const { return c_mixed_; }

  /// (ad_u)^g_b = c_{ab}^g u^a.
  Matrix ad(const Vector& u) const {
    Matrix m = Matrix::Zero(n_, n_);
    for (int a = 0; a < n_; ++a) {
      if (u(a) == 0.0) continue;
      for (int b = 0; b < n_; ++b)
        for (int g = 0; g < n_; ++g) m(g, b) += c_mixed_(a, b, g) * u(a);
    }
    return m;
  }
  Vector bracket(const Vector& x, const Vector& y) const { return ad(x) * y; }
  double pairing(const Vector& x, const Vector& y) const { return x.dot(eta_ * y); }

  /// c_{abg} c^{abg}.
  double c_norm2() const {
    Tensor up = raise(raise(c_mixed_, 0, eta_inv_), 1, eta_inv_);
    double s = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) s += c_.flat(i) * up.flat(i);
    return s;
  }

 private:
  int n_ = 0;
  Matrix eta_, eta_inv_;
  Tensor c_, c_mixed_;
};

struct AlgebraReport {
  double antisymmetry_residual = 0.0;
  double jacobi_residual = 0.0;
  int p = 0;
  int q = 0;
  double condition_number = 1.0;
  bool pass = false;
};

inline std::pair<int, int> signature(const Matrix& eta) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (eta + eta.transpose()), Eigen::EigenvaluesOnly);
  int p = 0, q = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) (es.eigenvalues()(i) > 0 ? p : q)++;
  return {p, q};
}

/// Jacobi residual of mixed structure constants f(a,b,g) = f_{ab}^g, scaled by max|f|^2.
inline double jacobi_residual(const Tensor& f) {
  const int n = f.dim();
  const double scale = f.max_abs();
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int g = 0; g < n; ++g)
        for (int d = 0; d < n; ++d) {
          double s = 0.0;
          for (int e = 0; e < n; ++e)
            s += f(a, b, e) * f(e, g, d) + f(b, g, e) * f(e, a, d) + f(g, a, e) * f(e, b, d);
          worst = std::max(worst, std::abs(s));
        }
  return worst / (scale * scale);
}

inline AlgebraReport validate_algebra(const QuadraticLieAlgebra& a) {
  AlgebraReport r;
  const int n = a.n();
  const Tensor& c = a.c();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) {
        r.antisymmetry_residual = std::max(r.antisymmetry_residual, std::abs(c(x, y, z) + c(y, x, z)));
        r.antisymmetry_residual = std::max(r.antisymmetry_residual, std::abs(c(x, y, z) + c(x, z, y)));
      }
  r.jacobi_residual = jacobi_residual(a.c_mixed());
  std::tie(r.p, r.q) = signature(a.eta());
  Eigen::JacobiSVD<Matrix> svd(a.eta());
  const auto& sv = svd.singularValues();
  r.condition_number = sv(0) / sv(sv.size() - 1);
  const double cscale = std::max(c.max_abs(), 1e-300);
  r.pass = r.antisymmetry_residual / cscale <= 1e-10 && r.jacobi_residual <= 1e-10;
  return r;
}

/// Fills c at all six permutations of (x,y,z) with the matching sign.
inline void set_antisymmetric(Tensor& c, int x, int y, int z, double v) {
  c(x, y, z) = v;
  c(y, z, x) = v;
  c(z, x, y) = v;
  c(y, x, z) = -v;
  c(x, z, y) = -v;
  c(z, y, x) = -v;
}

inline double levi_civita_symbol(int i, int j, int k) {
  return 0.5 * (i - j) * (j - k) * (k - i);
}

/// Mixed structure constants f_{ij}^k of a plain Lie algebra.
struct LieAlgebraData {
  Tensor f;
  int dim() const { return f.dim(); }
};

inline LieAlgebraData su2_structure(double scale = 1.0) {
  LieAlgebraData h{Tensor(3, 3)};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) h.f(i, j, k) = scale * levi_civita_symbol(i, j, k);
  return h;
}

inline QuadraticLieAlgebra abelian(int n, int p) {
  if (n < 1 || p < 0 || p > n) throw ValidationError("InvalidPreset", "abelian needs 0 <= p <= n, n >= 1");
  Matrix eta = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) eta(i, i) = i < p ? 1.0 : -1.0;
  return {eta, Tensor(n, 3)};
}

inline QuadraticLieAlgebra so3(double scale = 1.0) {
  Tensor c(3, 3);
  set_antisymmetric(c, 0, 1, 2, scale);
  return {Matrix::Identity(3, 3), c};
}

/// h semidirect h*, basis x_0..x_{m-1} then xi^0..xi^{m-1}, <x_i, xi^j> = delta.
inline QuadraticLieAlgebra cotangent_double(const LieAlgebraData& h) {
  const int m = h.dim();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        if (std::abs(h.f(i, j, k) + h.f(j, i, k)) > 1e-12 * std::max(1.0, h.f.max_abs()))
          throw InvalidLieAlgebra("structure constants are not antisymmetric in the first pair");
  const double jr = jacobi_residual(h.f);
  if (jr > 1e-10) throw InvalidLieAlgebra("Jacobi residual " + std::to_string(jr));
  const int n = 2 * m;
  Matrix eta = Matrix::Zero(n, n);
  for (int i = 0; i < m; ++i) eta(i, m + i) = eta(m + i, i) = 1.0;
  Tensor c(n, 3);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      for (int k = 0; k < m; ++k)
        if (h.f(i, j, k) != 0.0) set_antisymmetric(c, i, j, m + k, h.f(i, j, k));
  return {eta, c};
}

/// sl(2,C) as the Drinfeld double of su(2): X_i = su(2) generators, Y_i = i X_i,
/// pairing <X_i, Y_j> = delta (imaginary part of the trace form, rescaled).
inline QuadraticLieAlgebra complex_double_su2(double scale = 1.0) {
  Matrix eta = Matrix::Zero(6, 6);
  for (int i = 0; i < 3; ++i) eta(i, 3 + i) = eta(3 + i, i) = 1.0;
  Tensor c(6, 3);
  set_antisymmetric(c, 0, 1, 5, scale);
  set_antisymmetric(c, 1, 2, 3, scale);
  set_antisymmetric(c, 2, 0, 4, scale);
  set_antisymmetric(c, 3, 4, 5, -scale);
  return {eta, c};
}

/// eta' = P^T eta P, c'_{ijk} = P^a_i P^b_j P^c_k c_{abc}; columns of P are the new basis.
inline QuadraticLieAlgebra change_basis(const QuadraticLieAlgebra& a, const Matrix& P) {
  if (P.rows() != a.n() || P.cols() != a.n()) throw SingularBasis("basis matrix has the wrong shape");
  Eigen::JacobiSVD<Matrix> svd(P);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) throw SingularBasis("basis matrix is numerically singular");
  const Matrix Pt = P.transpose();
  Tensor c = contract_slot(contract_slot(contract_slot(a.c(), 0, Pt), 1, Pt), 2, Pt);
  Matrix eta = Pt * a.eta() * P;
  eta = (0.5 * (eta + eta.transpose())).eval();
  return {eta, c};
}

/// Same bracket with the pairing negated.
inline QuadraticLieAlgebra negate_pairing(const QuadraticLieAlgebra& a) {
  return {-a.eta(), -1.0 * a.c()};
}

inline QuadraticLieAlgebra direct_sum(const QuadraticLieAlgebra& a, const QuadraticLieAlgebra& b) {
  const int n = a.n() + b.n();
  Matrix eta = Matrix::Zero(n, n);
  eta.topLeftCorner(a.n(), a.n()) = a.eta();
  eta.bottomRightCorner(b.n(), b.n()) = b.eta();
  Tensor c(n, 3);
  for (int x = 0; x < a.n(); ++x)
    for (int y = 0; y < a.n(); ++y)
      for (int z = 0; z < a.n(); ++z) c(x, y, z) = a.c()(x, y, z);
  const int o = a.n();
  for (int x = 0; x < b.n(); ++x)
    for (int y = 0; y < b.n(); ++y)
      for (int z = 0; z < b.n(); ++z) c(o + x, o + y, o + z) = b.c()(x, y, z);
  return {eta, c};
}

}  // namespace grf
