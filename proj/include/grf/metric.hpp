#pragma once

#include "grf/algebra.hpp"

#include <Eigen/QR>

#include <vector>

namespace grf {

/// eta-symmetric involution G (endomorphism, G(i,j) = G^i_j) with cached splitting.
struct GeneralizedPseudometric {
  Matrix G;
  int n_plus = 0;
  int n_minus = 0;
  bool strictly_positive = false;
};

/// Tangent vector chi at G: eta-symmetric and anticommuting with G.
struct MetricTangent {
  Matrix chi;
};

struct MetricReport {
  bool pseudometric = false;
  bool strictly_positive = false;
  int n_plus = 0;
  int n_minus = 0;
  double involution_residual = 0.0;
  double symmetry_residual = 0.0;
};

inline Matrix proj_plus(const Matrix& G) { return 0.5 * (Matrix::Identity(G.rows(), G.cols()) + G); }
inline Matrix proj_minus(const Matrix& G) { return 0.5 * (Matrix::Identity(G.rows(), G.cols()) - G); }

inline double involution_residual(const Matrix& G) {
  return max_abs(G * G - Matrix::Identity(G.rows(), G.cols()));
}

inline bool is_positive_definite(const Matrix& S, double rel_tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  return es.eigenvalues().minCoeff() > rel_tol * scale;
}

inline MetricReport validate_metric(const QuadraticLieAlgebra& a, const Matrix& G) {
  MetricReport r;
  const int n = a.n();
  if (G.rows() != n || G.cols() != n) return r;
  const Matrix etaG = a.eta() * G;
  r.symmetry_residual = max_abs(etaG - etaG.transpose());
  r.involution_residual = involution_residual(G);
  const double gscale = std::max(1.0, max_abs(G));
  const double trace_plus = proj_plus(G).trace();
  r.n_plus = static_cast<int>(std::lround(trace_plus));
  r.n_minus = n - r.n_plus;
  const bool ranks_ok = r.n_plus != 1 && r.n_minus != 1;
  r.pseudometric = r.symmetry_residual <= 1e-10 * gscale * std::max(1.0, max_abs(a.eta())) &&
                   r.involution_residual <= 1e-10 * gscale * gscale && ranks_ok;
  r.strictly_positive = r.pseudometric && is_positive_definite(etaG);
  return r;
}

/// Validates G and returns it with cached ranks; throws on failure.
inline GeneralizedPseudometric make_metric(const QuadraticLieAlgebra& a, const Matrix& G) {
  const MetricReport r = validate_metric(a, G);
  if (!r.pseudometric) {
    if (r.n_plus == 1 || r.n_minus == 1)
      throw ForbiddenRank("eigenspace ranks (" + std::to_string(r.n_plus) + ", " +
                          std::to_string(r.n_minus) + ") include a rank-1 block");
    throw NotAPseudometric("involution residual " + std::to_string(r.involution_residual) +
                           ", symmetry residual " + std::to_string(r.symmetry_residual));
  }
  return {G, r.n_plus, r.n_minus, r.strictly_positive};
}

/// G = P+ - P- with P+ the eta-orthogonal projection onto span(Vplus).
inline GeneralizedPseudometric metric_from_subspace(const QuadraticLieAlgebra& a,
                                                    const std::vector<Vector>& Vplus) {
  const int n = a.n();
  const int k = static_cast<int>(Vplus.size());
  Matrix W(n, k);
  for (int j = 0; j < k; ++j) {
    if (Vplus[j].size() != n) throw DegenerateSubspace("vector of wrong length");
    W.col(j) = Vplus[j];
  }
  if (k > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(W);
    qr.setThreshold(1e-12);
    if (qr.rank() != k) throw DegenerateSubspace("spanning vectors are linearly dependent");
  }
  if (k == 1 || n - k == 1)
    throw ForbiddenRank("rank (" + std::to_string(k) + ", " + std::to_string(n - k) + ")");
  Matrix Pp = Matrix::Zero(n, n);
  if (k > 0) {
    const Matrix M = W.transpose() * a.eta() * W;
    Eigen::JacobiSVD<Matrix> svd(M);
    const auto& sv = svd.singularValues();
    const double wscale = W.squaredNorm() / k * max_abs(a.eta());
    if (!(sv(k - 1) > 1e-12 * std::max(wscale, 1e-300)))
      throw DegenerateSubspace("pairing restricted to the subspace is degenerate");
    Pp = W * M.inverse() * W.transpose() * a.eta();
  }
  const Matrix G = 2.0 * Pp - Matrix::Identity(n, n);
  return make_metric(a, G);
}

/// V+ = graph of (g + B) on a cotangent double with basis (x_i, xi^i).
/// Column i of V+ is x_i + sum_j (g+B)(j,i) xi^j.
inline GeneralizedPseudometric graph_metric(const QuadraticLieAlgebra& a, const Matrix& g, const Matrix& B) {
  const int m = static_cast<int>(g.rows());
  if (a.n() != 2 * m || g.cols() != m || B.rows() != m || B.cols() != m)
    throw ValidationError("ShapeMismatch", "graph metric needs m x m blocks on a 2m-dimensional double");
  if (max_abs(g - g.transpose()) > 1e-12 * std::max(1.0, max_abs(g)))
    throw ValidationError("ShapeMismatch", "g must be symmetric");
  if (max_abs(B + B.transpose()) > 1e-12 * std::max(1.0, max_abs(B)))
    throw ValidationError("ShapeMismatch", "B must be antisymmetric");
  std::vector<Vector> V;
  const Matrix E = g + B;
  for (int i = 0; i < m; ++i) {
    Vector v = Vector::Zero(2 * m);
    v(i) = 1.0;
    for (int j = 0; j < m; ++j) v(m + j) = E(j, i);
    V.push_back(v);
  }
  return metric_from_subspace(a, V);
}

struct AdaptedFrame {
  Matrix Q;  ///< columns: V+ basis then V- basis
  QuadraticLieAlgebra algebra;
  Matrix G;
  int n_plus = 0;
  int n_minus = 0;

  /// Ambient endomorphism in frame coordinates.
  Matrix to_frame(const Matrix& M) const { return Q.inverse() * M * Q; }
  Matrix from_frame(const Matrix& M) const { return Q * M * Q.inverse(); }
};

namespace detail {

/// Pseudo-orthonormalizes the columns of V under eta with pivoting on the
/// largest self-pairing; null-only remainders are repaired by pairing sums.
inline Matrix pseudo_gram_schmidt(const Matrix& eta, Matrix V) {
  const int k = static_cast<int>(V.cols());
  std::vector<Vector> rest;
  for (int j = 0; j < k; ++j) rest.push_back(V.col(j));
  std::vector<Vector> pos, neg;
  double scale = 0.0;
  for (const auto& v : rest) scale = std::max(scale, std::abs(v.dot(eta * v)) + v.squaredNorm());
  const double tol = 1e-10 * std::max(scale, 1e-300) * std::max(1.0, max_abs(eta));
  while (!rest.empty()) {
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i < static_cast<int>(rest.size()); ++i) {
      const double s = std::abs(rest[i].dot(eta * rest[i]));
      if (s > best_val + 1e-14 * scale) {
        best_val = s;
        best = i;
      }
    }
    if (best_val <= tol) {
      int bi = -1, bj = -1;
      double bv = 0.0;
      for (int i = 0; i < static_cast<int>(rest.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(rest.size()); ++j) {
          const double s = std::abs(rest[i].dot(eta * rest[j]));
          if (s > bv) {
            bv = s;
            bi = i;
            bj = j;
          }
        }
      if (bi < 0 || bv <= tol) throw DegenerateSubspace("pairing restricted to an eigenspace is degenerate");
      const double sgn = rest[bi].dot(eta * rest[bj]) > 0 ? 1.0 : -1.0;
      rest[bi] += sgn * rest[bj];
      continue;
    }
    Vector v = rest[best];
    rest.erase(rest.begin() + best);
    const double s = v.dot(eta * v);
    v /= std::sqrt(std::abs(s));
    const double sign = s > 0 ? 1.0 : -1.0;
    for (auto& w : rest) w -= sign * v.dot(eta * w) * v;
    (sign > 0 ? pos : neg).push_back(v);
  }
  Matrix out(V.rows(), k);
  int c = 0;
  for (const auto& v : pos) out.col(c++) = v;
  for (const auto& v : neg) out.col(c++) = v;
  return out;
}

inline Matrix range_basis(const Matrix& P, int rank) {
  Eigen::ColPivHouseholderQR<Matrix> qr(P);
  Matrix B(P.rows(), rank);
  for (int j = 0; j < rank; ++j) B.col(j) = P.col(qr.colsPermutation().indices()(j));
  return B;
}

}  // namespace detail

inline AdaptedFrame adapted_frame(const QuadraticLieAlgebra& a, const Matrix& G) {
  const GeneralizedPseudometric gm = make_metric(a, G);
  const int n = a.n();
  Matrix Q(n, n);
  if (gm.n_plus > 0) {
    Matrix Bp = detail::pseudo_gram_schmidt(a.eta(), detail::range_basis(proj_plus(G), gm.n_plus));
    Q.leftCols(gm.n_plus) = Bp;
  }
  if (gm.n_minus > 0) {
    Matrix Bm = detail::pseudo_gram_schmidt(a.eta(), detail::range_basis(proj_minus(G), gm.n_minus));
    Q.rightCols(gm.n_minus) = Bm;
  }
  AdaptedFrame f{Q, change_basis(a, Q), Matrix::Zero(n, n), gm.n_plus, gm.n_minus};
  for (int i = 0; i < n; ++i) f.G(i, i) = i < gm.n_plus ? 1.0 : -1.0;
  return f;
}

/// L_u G = 2 P- ad_u P+ - 2 P+ ad_u P-.
inline MetricTangent lie_derivative_metric(const QuadraticLieAlgebra& a, const Matrix& G, const Vector& u) {
  const Matrix ad = a.ad(u);
  const Matrix Pp = proj_plus(G), Pm = proj_minus(G);
  return {2.0 * Pm * ad * Pp - 2.0 * Pp * ad * Pm};
}

/// Random eta-symmetric S sandwiched into the V+ x V- blocks.
inline MetricTangent random_tangent(const QuadraticLieAlgebra& a, const Matrix& G, std::uint64_t seed) {
  Rng rng(seed);
  const int n = a.n();
  Matrix S = rng.normal_matrix(n, n);
  S = a.eta_inv() * (S + S.transpose()) * 0.5;
  const Matrix Pp = proj_plus(G), Pm = proj_minus(G);
  return {Pp * S * Pm + Pm * S * Pp};
}

/// |chi|^2_G = -chi^{ab} chi_{ab}.
inline double norm2_G(const QuadraticLieAlgebra& a, const Matrix& chi) {
  const Matrix low = a.eta() * chi;
  const Matrix up = chi * a.eta_inv();
  return -(low.array() * up.array()).sum();
}

/// Matrix K with eta K antisymmetric, unit-scale random entries.
inline Matrix random_eta_antisymmetric(const QuadraticLieAlgebra& a, Rng& rng) {
  const int n = a.n();
  Matrix A = rng.normal_matrix(n, n);
  return a.eta_inv() * (A - A.transpose()) * 0.5;
}

}  // namespace grf
