#pragma once

#include "grf/metric.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <string>

namespace grf {

/// Random eta-orthogonal conjugation of the standard splitting of eta.
inline Matrix random_strictly_positive_metric(const QuadraticLieAlgebra& a, Rng& rng, double spread = 1.5) {
  const int n = a.n();
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.eta());
  Matrix Q(n, n);
  Vector s(n);
  int c = 0;
  for (int pass = 0; pass < 2; ++pass)
    for (int i = n - 1; i >= 0; --i) {
      const double l = es.eigenvalues()(i);
      if ((pass == 0) != (l > 0)) continue;
      Q.col(c) = es.eigenvectors().col(i) / std::sqrt(std::abs(l));
      s(c++) = l > 0 ? 1.0 : -1.0;
    }
  // Rotations and boosts generated in the pseudo-orthonormal frame.
  Matrix A = rng.normal_matrix(n, n);
  A = (0.5 * (A - A.transpose())).eval();
  const double nrm = A.norm();
  if (nrm > 0) A *= spread / nrm;
  const Matrix K0 = s.asDiagonal() * A;
  const Matrix E = K0.exp();
  const Matrix Gf = E * s.asDiagonal() * E.inverse();
  return Q * Gf * Q.inverse();
}

/// A seeded test instance: algebra (in a random basis) and a strictly positive metric.
struct Instance {
  std::string name;
  QuadraticLieAlgebra algebra;
  Matrix G;
};

inline LieAlgebraData su2_plus_line(double scale) {
  LieAlgebraData h{Tensor(4, 3)};
  const LieAlgebraData s = su2_structure(scale);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) h.f(i, j, k) = s.f(i, j, k);
  return h;
}

inline QuadraticLieAlgebra preset_by_index(int k, double scale) {
  switch (k % 7) {
    case 0: return abelian(4, 2);
    case 1: return so3(scale);
    case 2: return cotangent_double(su2_structure(scale));
    case 3: return complex_double_su2(scale);
    case 4: return direct_sum(so3(scale), negate_pairing(so3(scale)));
    case 5: return cotangent_double(su2_plus_line(scale));
    default: return direct_sum(abelian(2, 0), so3(scale));
  }
}

inline const char* preset_label(int k) {
  static const char* names[] = {"abelian(4,2)",        "so3",         "cotangent_double(su2)",
                                "complex_double_su2",  "so3+so3(-)",  "cotangent_double(su2+R)",
                                "abelian(0,2)+so3"};
  return names[k % 7];
}

inline Instance random_instance(std::uint64_t seed) {
  Rng rng(seed * 7919 + 17);
  const int k = static_cast<int>(seed % 7);
  const double scale = rng.uniform(0.5, 2.0);
  const QuadraticLieAlgebra base = preset_by_index(k, scale);
  const int n = base.n();
  Matrix P = Matrix::Identity(n, n) + 0.25 * rng.normal_matrix(n, n) / std::sqrt(double(n));
  const QuadraticLieAlgebra a = change_basis(base, P);
  const Matrix G = random_strictly_positive_metric(a, rng);
  return {preset_label(k), a, G};
}

}  // namespace grf
