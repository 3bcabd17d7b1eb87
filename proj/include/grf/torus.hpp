#pragma once

#include "grf/errors.hpp"
#include "grf/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace grf::torus {

/// Uniform periodic grid on T^d with N points per axis and period L.
struct TorusGeometry {
  int d = 3;
  int N = 16;
  double L = 2.0 * std::numbers::pi;

  double h() const { return L / N; }
  std::size_t nodes() const {
    std::size_t n = 1;
    for (int a = 0; a < d; ++a) n *= static_cast<std::size_t>(N);
    return n;
  }
  /// Row-major node index, axis 0 slowest.
  std::size_t index(const std::array<int, 3>& i) const {
    std::size_t k = 0;
    for (int a = 0; a < d; ++a) k = k * N + static_cast<std::size_t>(((i[a] % N) + N) % N);
    return k;
  }
  std::array<int, 3> coords(std::size_t k) const {
    std::array<int, 3> i{0, 0, 0};
    for (int a = d - 1; a >= 0; --a) {
      i[a] = static_cast<int>(k % N);
      k /= N;
    }
    return i;
  }
};

inline void validate_geometry(const TorusGeometry& g) {
  if (g.d != 2 && g.d != 3) throw ValidationError("InvalidTorus", "d must be 2 or 3");
  if (g.N < 8 || g.N % 2 != 0) throw ValidationError("InvalidTorus", "N must be even and at least 8");
  if (!(g.L > 0.0) || !std::isfinite(g.L)) throw ValidationError("InvalidTorus", "L must be positive");
}

/// Fields (g, B, phi) per node; g and B stored as full d x d blocks, H0 is the dx0^dx1^dx2 coefficient.
struct TorusFieldState {
  TorusGeometry geo;
  std::vector<double> g;
  std::vector<double> B;
  std::vector<double> phi;
  double H0 = 0.0;
  double t = 0.0;

  int d() const { return geo.d; }
  double& gij(std::size_t n, int i, int j) { return g[(n * d() + i) * d() + j]; }
  double gij(std::size_t n, int i, int j) const { return g[(n * d() + i) * d() + j]; }
  double& Bij(std::size_t n, int i, int j) { return B[(n * d() + i) * d() + j]; }
  double Bij(std::size_t n, int i, int j) const { return B[(n * d() + i) * d() + j]; }
};

/// Flat metric g = Id, B = 0, phi = 0, H0 = k.
inline TorusFieldState flat_state(const TorusGeometry& geo, double k = 0.0) {
  validate_geometry(geo);
  if (geo.d == 2 && k != 0.0) throw ValidationError("InvalidTorus", "H0 must vanish on T^2");
  TorusFieldState s;
  s.geo = geo;
  const std::size_t n = geo.nodes(), dd = static_cast<std::size_t>(geo.d) * geo.d;
  s.g.assign(n * dd, 0.0);
  s.B.assign(n * dd, 0.0);
  s.phi.assign(n, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (int i = 0; i < geo.d; ++i) s.gij(p, i, i) = 1.0;
  s.H0 = k;
  return s;
}

/// amplitude * sin(2 pi <wave, x> / L + phase) added to one component.
struct PerturbationMode {
  enum class Field { g, B, phi } field = Field::g;
  int i = 0;
  int j = 0;
  double amplitude = 0.0;
  std::array<int, 3> wave{1, 0, 0};
  double phase = 0.0;
};

inline void apply_mode(TorusFieldState& s, const PerturbationMode& m) {
  const TorusGeometry& geo = s.geo;
  const int d = geo.d;
  if (m.field != PerturbationMode::Field::phi &&
      (m.i < 0 || m.j < 0 || m.i >= d || m.j >= d))
    throw ValidationError("InvalidTorus", "perturbation index out of range");
  if (m.field == PerturbationMode::Field::B && m.i == m.j)
    throw ValidationError("InvalidTorus", "B perturbation needs i != j");
  for (std::size_t p = 0; p < geo.nodes(); ++p) {
    const auto c = geo.coords(p);
    double arg = m.phase;
    for (int a = 0; a < d; ++a) arg += 2.0 * std::numbers::pi * m.wave[a] * c[a] * geo.h() / geo.L;
    const double v = m.amplitude * std::sin(arg);
    switch (m.field) {
      case PerturbationMode::Field::g:
        s.gij(p, m.i, m.j) += v;
        if (m.i != m.j) s.gij(p, m.j, m.i) += v;
        break;
      case PerturbationMode::Field::B:
        s.Bij(p, m.i, m.j) += v;
        s.Bij(p, m.j, m.i) -= v;
        break;
      case PerturbationMode::Field::phi:
        s.phi[p] += v;
        break;
    }
  }
}

/// `count` random modes on g, B (d = 3) and phi with wave numbers in {-2..2} and amplitudes up to `amplitude`.
inline std::vector<PerturbationMode> random_modes(int d, std::uint64_t seed, double amplitude, int count = 6,
                                                  bool perturb_B = true, bool perturb_phi = true, int max_wave = 2) {
  Rng rng(seed);
  std::vector<PerturbationMode> out;
  for (int m = 0; m < count; ++m) {
    PerturbationMode pm;
    const int kinds = 1 + (perturb_B && d == 3 ? 1 : 0) + (perturb_phi ? 1 : 0);
    int kind = static_cast<int>(rng.uniform(0.0, kinds));
    if (kind >= 1 && !(perturb_B && d == 3)) ++kind;
    pm.field = kind == 0 ? PerturbationMode::Field::g : kind == 1 ? PerturbationMode::Field::B : PerturbationMode::Field::phi;
    pm.i = static_cast<int>(rng.uniform(0.0, d));
    pm.j = static_cast<int>(rng.uniform(0.0, d));
    if (pm.field == PerturbationMode::Field::B && pm.i == pm.j) pm.j = (pm.i + 1) % d;
    bool nonzero = false;
    for (int a = 0; a < 3; ++a) {
      pm.wave[a] = a < d ? static_cast<int>(std::floor(rng.uniform(-max_wave, max_wave + 1.0))) : 0;
      nonzero = nonzero || pm.wave[a] != 0;
    }
    if (!nonzero) pm.wave[0] = 1;
    pm.amplitude = amplitude * rng.uniform(0.2, 1.0);
    pm.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    out.push_back(pm);
  }
  return out;
}

/// Periodic fourth-order central differences.
class Stencil {
 public:
  explicit Stencil(const TorusGeometry& geo) : geo_(geo), h_(geo.h()) {
    const std::size_t n = geo.nodes();
    nb_.resize(n * geo.d * 4);
    for (std::size_t p = 0; p < n; ++p) {
      const auto c = geo.coords(p);
      for (int a = 0; a < geo.d; ++a) {
        const int off[4] = {-2, -1, 1, 2};
        for (int k = 0; k < 4; ++k) {
          auto q = c;
          q[a] += off[k];
          nb_[(p * geo.d + a) * 4 + k] = geo.index(q);
        }
      }
    }
  }

  const TorusGeometry& geo() const { return geo_; }

  /// d/dx_a of component `comp` of a field with `stride` values per node.
  double d1(const std::vector<double>& f, std::size_t stride, std::size_t comp, std::size_t p, int a) const {
    const std::size_t* q = &nb_[(p * geo_.d + a) * 4];
    return (f[q[0] * stride + comp] - 8.0 * f[q[1] * stride + comp] + 8.0 * f[q[2] * stride + comp] -
            f[q[3] * stride + comp]) /
           (12.0 * h_);
  }
  double d2(const std::vector<double>& f, std::size_t stride, std::size_t comp, std::size_t p, int a) const {
    const std::size_t* q = &nb_[(p * geo_.d + a) * 4];
    return (-f[q[0] * stride + comp] + 16.0 * f[q[1] * stride + comp] - 30.0 * f[p * stride + comp] +
            16.0 * f[q[2] * stride + comp] - f[q[3] * stride + comp]) /
           (12.0 * h_ * h_);
  }

  /// First derivatives of every component: out[(p * d + a) * stride + comp].
  std::vector<double> gradient(const std::vector<double>& f, std::size_t stride) const {
    const std::size_t n = geo_.nodes();
    std::vector<double> out(n * geo_.d * stride);
    for (std::size_t p = 0; p < n; ++p)
      for (int a = 0; a < geo_.d; ++a)
        for (std::size_t c = 0; c < stride; ++c) out[(p * geo_.d + a) * stride + c] = d1(f, stride, c, p, a);
    return out;
  }

  /// Second derivatives: pure ones with the five-point stencil, mixed ones as D_a D_b.
  /// out[((p * d + a) * d + b) * stride + comp], symmetric in (a, b).
  std::vector<double> hessian(const std::vector<double>& f, std::size_t stride) const {
    const int d = geo_.d;
    const std::size_t n = geo_.nodes();
    const std::vector<double> grad = gradient(f, stride);
    std::vector<double> out(n * d * d * stride);
    for (std::size_t p = 0; p < n; ++p)
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b)
          for (std::size_t c = 0; c < stride; ++c) {
            const double v = a == b ? d2(f, stride, c, p, a) : d1(grad, d * stride, b * stride + c, p, a);
            out[((p * d + a) * d + b) * stride + c] = v;
            out[((p * d + b) * d + a) * stride + c] = v;
          }
    return out;
  }

 private:
  TorusGeometry geo_;
  double h_;
  std::vector<std::size_t> nb_;
};

using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

inline double min_eigenvalue(const TorusFieldState& s, std::size_t p) {
  const int d = s.d();
  Small g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = 0.5 * (s.gij(p, i, j) + s.gij(p, j, i));
  Eigen::SelfAdjointEigenSolver<Small> es(g, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// min over nodes of the smallest eigenvalue of g.
inline double spd_margin(const TorusFieldState& s) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) m = std::min(m, min_eigenvalue(s, p));
  return m;
}

inline void require_nondegenerate(const TorusFieldState& s) {
  for (std::size_t p = 0; p < s.geo.nodes(); ++p) {
    const double m = min_eigenvalue(s, p);
    if (!(m >= 1e-8))
      throw DegenerateMetric("min eigenvalue of g is " + std::to_string(m) + " at node " + std::to_string(p));
  }
}

/// H_{ijk} = H0 eps_{ijk} + D_i B_jk + D_j B_ki + D_k B_ij, stored as 27 values per node (zero on T^2).
inline std::vector<double> flux_H(const TorusFieldState& s, const Stencil& st) {
  const std::size_t n = s.geo.nodes();
  std::vector<double> H(n * 27, 0.0);
  if (s.d() != 3) return H;
  const std::vector<double> dB = st.gradient(s.B, 9);
  auto db = [&](std::size_t p, int a, int i, int j) { return dB[(p * 3 + a) * 9 + i * 3 + j]; };
  for (std::size_t p = 0; p < n; ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          const double eps = 0.5 * (i - j) * (j - k) * (k - i);
          H[p * 27 + (i * 3 + j) * 3 + k] = s.H0 * eps + db(p, i, j, k) + db(p, j, k, i) + db(p, k, i, j);
        }
  return H;
}

inline std::vector<double> flux_H(const TorusFieldState& s) { return flux_H(s, Stencil(s.geo)); }

/// Per-node geometry from g and its first and second derivatives.
struct NodeGeometry {
  int d = 3;
  double ginv[3][3]{};
  double sqrt_det = 1.0;
  double Gamma[3][3][3]{};  ///< Gamma^k_ij
  double Ric[3][3]{};
  double R = 0.0;
};

namespace detail {

inline NodeGeometry node_geometry(const TorusFieldState& s, std::size_t p, const std::vector<double>& dg,
                                  const std::vector<double>& ddg) {
  const int d = s.d();
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  NodeGeometry ng;
  ng.d = d;
  Small g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = s.gij(p, i, j);
  const Small gi = g.inverse();
  ng.sqrt_det = std::sqrt(g.determinant());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) ng.ginv[i][j] = gi(i, j);
  auto D1 = [&](int a, int i, int j) { return dg[(p * d + a) * dd + i * d + j]; };
  auto D2 = [&](int a, int b, int i, int j) { return ddg[((p * d + a) * d + b) * dd + i * d + j]; };

  double C[3][3][3];          // Gamma_{lij}
  double dC[3][3][3][3];      // d_m Gamma_{lij}, index [m][l][i][j]
  double dginv[3][3][3];      // d_m g^{kl}
  for (int l = 0; l < d; ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        C[l][i][j] = 0.5 * (D1(i, l, j) + D1(j, i, l) - D1(l, i, j));
        for (int m = 0; m < d; ++m) dC[m][l][i][j] = 0.5 * (D2(m, i, l, j) + D2(m, j, i, l) - D2(m, l, i, j));
      }
  for (int m = 0; m < d; ++m)
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) {
        double v = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) v -= ng.ginv[k][a] * D1(m, a, b) * ng.ginv[b][l];
        dginv[m][k][l] = v;
      }
  double dGamma[3][3][3][3];  // d_m Gamma^k_ij, index [m][k][i][j]
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double v = 0.0;
        for (int l = 0; l < d; ++l) v += ng.ginv[k][l] * C[l][i][j];
        ng.Gamma[k][i][j] = v;
        for (int m = 0; m < d; ++m) {
          double w = 0.0;
          for (int l = 0; l < d; ++l) w += dginv[m][k][l] * C[l][i][j] + ng.ginv[k][l] * dC[m][l][i][j];
          dGamma[m][k][i][j] = w;
        }
      }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double v = 0.0;
      for (int k = 0; k < d; ++k) {
        v += dGamma[k][k][i][j] - dGamma[j][k][i][k];
        for (int l = 0; l < d; ++l)
          v += ng.Gamma[k][k][l] * ng.Gamma[l][i][j] - ng.Gamma[k][j][l] * ng.Gamma[l][i][k];
      }
      ng.Ric[i][j] = ng.Ric[j][i] = v;
    }
  double R = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) R += ng.ginv[i][j] * ng.Ric[i][j];
  ng.R = R;
  return ng;
}

struct Derivatives {
  std::vector<double> dg, ddg, dphi, ddphi;
};

inline Derivatives derivatives(const TorusFieldState& s, const Stencil& st) {
  const std::size_t dd = static_cast<std::size_t>(s.d()) * s.d();
  return {st.gradient(s.g, dd), st.hessian(s.g, dd), st.gradient(s.phi, 1), st.hessian(s.phi, 1)};
}

}  // namespace detail

/// Nodewise Christoffel symbols and classical Ricci tensor.
inline std::vector<NodeGeometry> node_geometries(const TorusFieldState& s, const Stencil& st) {
  const std::size_t dd = static_cast<std::size_t>(s.d()) * s.d();
  const std::vector<double> dg = st.gradient(s.g, dd), ddg = st.hessian(s.g, dd);
  std::vector<NodeGeometry> out(s.geo.nodes());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = detail::node_geometry(s, p, dg, ddg);
  return out;
}

struct TorusRhs {
  std::vector<double> dg, dB, dphi;
};

/// Right side of the exact-case flow for (g, B, phi).
inline TorusRhs torus_rhs(const TorusFieldState& s, const Stencil& st) {
  require_nondegenerate(s);
  const int d = s.d();
  const std::size_t n = s.geo.nodes(), dd = static_cast<std::size_t>(d) * d;
  const detail::Derivatives der = detail::derivatives(s, st);
  const std::vector<double> H = flux_H(s, st);
  const bool flux = d == 3;
  const std::vector<double> dH = flux ? st.gradient(H, 27) : std::vector<double>();
  TorusRhs r{std::vector<double>(n * dd, 0.0), std::vector<double>(n * dd, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t p = 0; p < n; ++p) {
    const NodeGeometry ng = detail::node_geometry(s, p, der.dg, der.ddg);
    const auto& gi = ng.ginv;
    double dphi[3], hess[3][3];
    for (int a = 0; a < d; ++a) dphi[a] = der.dphi[p * d + a];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double v = der.ddphi[(p * d + i) * d + j];
        for (int k = 0; k < d; ++k) v -= ng.Gamma[k][i][j] * dphi[k];
        hess[i][j] = v;
      }
    double lap = 0.0, grad2 = 0.0, up[3] = {0, 0, 0};
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        lap += gi[i][j] * hess[i][j];
        grad2 += gi[i][j] * dphi[i] * dphi[j];
        up[i] += gi[i][j] * dphi[j];
      }
    double H2[3][3] = {}, Hsq = 0.0;
    const double* h = flux ? &H[p * 27] : nullptr;
    auto Hc = [&](int i, int j, int k) { return h[(i * 3 + j) * 3 + k]; };
    if (flux) {
      double Hup[3][3][3];  // H_i^{kl}
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) {
            double v = 0.0;
            for (int m = 0; m < 3; ++m)
              for (int q = 0; q < 3; ++q) v += gi[k][m] * gi[l][q] * Hc(i, m, q);
            Hup[i][k][l] = v;
          }
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          double v = 0.0;
          for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) v += Hc(i, k, l) * Hup[j][k][l];
          H2[i][j] = H2[j][i] = v;
        }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) Hsq += gi[i][j] * H2[i][j];
    }
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double v = -2.0 * ng.Ric[i][j] + 0.5 * H2[i][j] - 4.0 * hess[i][j];
        r.dg[p * dd + i * d + j] = r.dg[p * dd + j * d + i] = v;
      }
    r.dphi[p] = lap - 2.0 * grad2 + Hsq / 12.0;
    if (!flux) continue;
    auto dHc = [&](int m, int i, int j, int k) { return dH[(p * 3 + m) * 27 + (i * 3 + j) * 3 + k]; };
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        double v = 0.0;
        for (int m = 0; m < 3; ++m)
          for (int k = 0; k < 3; ++k) {
            const double w = gi[m][k];
            if (w == 0.0) continue;
            double cov = dHc(m, k, i, j);
            for (int a = 0; a < 3; ++a)
              cov -= ng.Gamma[a][m][k] * Hc(a, i, j) + ng.Gamma[a][m][i] * Hc(k, a, j) +
                     ng.Gamma[a][m][j] * Hc(k, i, a);
            v += w * cov;
          }
        for (int k = 0; k < 3; ++k) v -= 2.0 * up[k] * Hc(k, i, j);
        r.dB[p * dd + i * 3 + j] = v;
        r.dB[p * dd + j * 3 + i] = -v;
      }
  }
  return r;
}

inline TorusRhs torus_rhs(const TorusFieldState& s) { return torus_rhs(s, Stencil(s.geo)); }

/// Metric and dilaton part only: dg = -2 Rc - 4 Hess(phi), dphi = Lap(phi) - 2 |dphi|^2, dB = 0.
inline TorusRhs ricci_dilaton_rhs(const TorusFieldState& s, const Stencil& st) {
  require_nondegenerate(s);
  const int d = s.d();
  const std::size_t n = s.geo.nodes(), dd = static_cast<std::size_t>(d) * d;
  const detail::Derivatives der = detail::derivatives(s, st);
  TorusRhs r{std::vector<double>(n * dd, 0.0), std::vector<double>(n * dd, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t p = 0; p < n; ++p) {
    const NodeGeometry ng = detail::node_geometry(s, p, der.dg, der.ddg);
    double lap = 0.0, grad2 = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double hess = der.ddphi[(p * d + i) * d + j];
        for (int k = 0; k < d; ++k) hess -= ng.Gamma[k][i][j] * der.dphi[p * d + k];
        if (j >= i) r.dg[p * dd + i * d + j] = r.dg[p * dd + j * d + i] = -2.0 * ng.Ric[i][j] - 4.0 * hess;
        lap += ng.ginv[i][j] * hess;
        grad2 += ng.ginv[i][j] * der.dphi[p * d + i] * der.dphi[p * d + j];
      }
    r.dphi[p] = lap - 2.0 * grad2;
  }
  return r;
}

/// Divergence-form operator: out = sum_ij D_i(sqrt(g) g^{ij} D_j u), not divided by sqrt(g).
inline std::vector<double> weighted_laplacian(const std::vector<NodeGeometry>& geo, const Stencil& st,
                                              const std::vector<double>& u) {
  const int d = st.geo().d;
  const std::size_t n = u.size();
  const std::vector<double> du = st.gradient(u, 1);
  std::vector<double> flux(n * d);
  for (std::size_t p = 0; p < n; ++p)
    for (int i = 0; i < d; ++i) {
      double v = 0.0;
      for (int j = 0; j < d; ++j) v += geo[p].ginv[i][j] * du[p * d + j];
      flux[p * d + i] = geo[p].sqrt_det * v;
    }
  std::vector<double> out(n, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (int i = 0; i < d; ++i) out[p] += st.d1(flux, d, i, p, i);
  return out;
}

/// Nodewise potential R - |H|^2 / 12.
inline std::vector<double> scalar_potential(const TorusFieldState& s, const Stencil& st,
                                            const std::vector<NodeGeometry>& geo) {
  const std::size_t n = s.geo.nodes();
  const std::vector<double> H = flux_H(s, st);
  std::vector<double> V(n);
  for (std::size_t p = 0; p < n; ++p) {
    double Hsq = 0.0;
    if (s.d() == 3) {
      const auto& gi = geo[p].ginv;
      const double* h = &H[p * 27];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k)
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) Hsq += gi[i][a] * gi[j][b] * gi[k][c] * h[(i * 3 + j) * 3 + k] * h[(a * 3 + b) * 3 + c];
    }
    V[p] = geo[p].R - Hsq / 12.0;
  }
  return V;
}

/// R - |H|^2/12 - 4 e^phi Lap_g e^-phi per node.
inline std::vector<double> generalized_scalar_field(const TorusFieldState& s, const Stencil& st) {
  require_nondegenerate(s);
  const std::vector<NodeGeometry> geo = node_geometries(s, st);
  std::vector<double> V = scalar_potential(s, st, geo);
  std::vector<double> u(V.size());
  for (std::size_t p = 0; p < u.size(); ++p) u[p] = std::exp(-s.phi[p]);
  const std::vector<double> lap = weighted_laplacian(geo, st, u);
  for (std::size_t p = 0; p < u.size(); ++p) V[p] -= 4.0 * lap[p] / (geo[p].sqrt_det * u[p]);
  return V;
}

inline std::vector<double> generalized_scalar_field(const TorusFieldState& s) {
  return generalized_scalar_field(s, Stencil(s.geo));
}

struct LambdaResult {
  double lambda = 0.0;
  std::vector<double> u;  ///< minimizer with unit mass, positive
  int iterations = 0;
  double residual = 0.0;
};

struct LambdaParams {
  double residual_tol = 1e-9;  ///< on |A u - lambda M u| / |M u|, relative to max(1, |lambda|)
  double quotient_tol = 1e-13; ///< stop when the quotient changes less than this (relative)
  int max_iterations = 5000;
};

namespace detail {

struct LambdaOperator {
  const std::vector<NodeGeometry>& geo;
  const Stencil& st;
  std::vector<double> V;

  std::vector<double> apply(const std::vector<double>& u) const {
    std::vector<double> out = weighted_laplacian(geo, st, u);
    for (std::size_t p = 0; p < u.size(); ++p) out[p] = -4.0 * out[p] + V[p] * geo[p].sqrt_det * u[p];
    return out;
  }
  double mass(const std::vector<double>& a, const std::vector<double>& b) const {
    double s = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) s += a[p] * geo[p].sqrt_det * b[p];
    return s;
  }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

/// min over u of (4|du|^2 + (R - |H|^2/12) u^2) dV_g / (u^2 dV_g): locally optimal
/// gradient iteration (Rayleigh-Ritz on u, the residual and the previous step).
inline LambdaResult lambda_torus(const TorusFieldState& s, const Stencil& st, const LambdaParams& lp = {},
                                 const std::vector<double>* initial = nullptr) {
  require_nondegenerate(s);
  const std::vector<NodeGeometry> geo = node_geometries(s, st);
  const detail::LambdaOperator op{geo, st, scalar_potential(s, st, geo)};
  const std::size_t n = s.geo.nodes();
  std::vector<double> u(n);
  if (initial && initial->size() == n) {
    u = *initial;
  } else {
    for (std::size_t p = 0; p < n; ++p) u[p] = std::exp(-s.phi[p]);
  }
  auto normalize = [&](std::vector<double>& v) {
    const double m = std::sqrt(op.mass(v, v));
    for (double& x : v) x /= m;
  };
  normalize(u);
  std::vector<double> Au = op.apply(u), pdir, Ap;
  double lam = detail::dot(u, Au);
  LambdaResult res;
  for (int it = 0; it < lp.max_iterations; ++it) {
    std::vector<double> r(n);
    double rn = 0.0, mn = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      r[p] = Au[p] - lam * geo[p].sqrt_det * u[p];
      rn += r[p] * r[p];
      mn += geo[p].sqrt_det * u[p] * geo[p].sqrt_det * u[p];
    }
    res.residual = std::sqrt(rn / mn);
    res.iterations = it;
    if (res.residual <= lp.residual_tol * std::max(1.0, std::abs(lam))) break;
    for (std::size_t p = 0; p < n; ++p) r[p] /= geo[p].sqrt_det;  // M^-1 residual
    // Basis {u, r, p}, M-orthonormalized; near-dependent directions dropped.
    std::vector<std::vector<double>> basis{u}, images{Au};
    auto add = [&](std::vector<double> v) {
      std::vector<double> w = v;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) {
          const double c = op.mass(b, w);
          for (std::size_t p = 0; p < n; ++p) w[p] -= c * b[p];
        }
      const double nv = std::sqrt(op.mass(v, v)), nw = std::sqrt(op.mass(w, w));
      if (!(nw > 1e-10 * nv) || nw == 0.0) return;
      for (double& x : w) x /= nw;
      images.push_back(op.apply(w));
      basis.push_back(std::move(w));
    };
    add(r);
    if (!pdir.empty()) add(pdir);
    const int k = static_cast<int>(basis.size());
    Eigen::MatrixXd A(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) A(i, j) = detail::dot(basis[i], images[j]);
    A = (0.5 * (A + A.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const Eigen::VectorXd c = es.eigenvectors().col(0);
    const double lam_new = es.eigenvalues()(0);
    std::vector<double> un(n, 0.0), Aun(n, 0.0), pn(n, 0.0);
    for (int i = 0; i < k; ++i)
      for (std::size_t p = 0; p < n; ++p) {
        un[p] += c(i) * basis[i][p];
        Aun[p] += c(i) * images[i][p];
        if (i > 0) pn[p] += c(i) * basis[i][p];
      }
    const double change = std::abs(lam_new - lam);
    u = std::move(un);
    Au = std::move(Aun);
    pdir = std::move(pn);
    lam = lam_new;
    if (it > 0 && change <= lp.quotient_tol * std::max(1.0, std::abs(lam)) &&
        res.residual <= 1e3 * lp.residual_tol * std::max(1.0, std::abs(lam)))
      break;
    if (it + 1 == lp.max_iterations)
      throw EigensolverStalled("no convergence after " + std::to_string(lp.max_iterations) + " iterations");
  }
  double sum = 0.0;
  for (double x : u) sum += x;
  if (sum < 0.0)
    for (double& x : u) x = -x;
  const double vol = std::pow(s.geo.h(), s.geo.d);
  for (double& x : u) x /= std::sqrt(vol);
  res.lambda = lam;
  res.u = std::move(u);
  return res;
}

inline LambdaResult lambda_torus(const TorusFieldState& s, const LambdaParams& lp = {}) {
  return lambda_torus(s, Stencil(s.geo), lp);
}

/// |sum GR u^2 dV - sum (4|du|^2 + V u^2) dV| with u = e^-phi, relative to the size of the terms.
inline double lambda_identity_residual(const TorusFieldState& s, const Stencil& st) {
  const std::vector<NodeGeometry> geo = node_geometries(s, st);
  const std::vector<double> V = scalar_potential(s, st, geo);
  const std::vector<double> GR = generalized_scalar_field(s, st);
  const int d = s.d();
  const std::size_t n = s.geo.nodes();
  std::vector<double> u(n);
  for (std::size_t p = 0; p < n; ++p) u[p] = std::exp(-s.phi[p]);
  const std::vector<double> du = st.gradient(u, 1);
  double lhs = 0.0, rhs = 0.0, scale = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double w = geo[p].sqrt_det;
    lhs += GR[p] * u[p] * u[p] * w;
    double grad = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) grad += geo[p].ginv[i][j] * du[p * d + i] * du[p * d + j];
    rhs += (4.0 * grad + V[p] * u[p] * u[p]) * w;
    scale += (4.0 * grad + std::abs(V[p]) * u[p] * u[p]) * w;
  }
  return std::abs(lhs - rhs) / std::max(1.0, scale);
}

struct TorusParams {
  double T = 1.0;
  double c_cfl = 0.15;
  int record_every = 1;
  bool compute_lambda = true;
  long max_steps = 10'000'000;
  LambdaParams lambda;
  bool ricci_dilaton_only = false;  ///< use the dedicated (g, phi) right side
  double dt_override = 0.0;         ///< fixed dt when positive (convergence studies)
  /// Called with each recorded state and its sample index.
  std::function<void(const TorusFieldState&, std::size_t)> on_sample;
};

inline void validate_params(const TorusParams& p) {
  if (!(p.T > 0.0) || !std::isfinite(p.T)) throw ValidationError("InvalidTorusParams", "T must be positive");
  if (!(p.c_cfl > 0.0)) throw ValidationError("InvalidTorusParams", "c_cfl must be positive");
  if (p.record_every < 1) throw ValidationError("InvalidTorusParams", "record_every must be at least 1");
  if (p.max_steps < 1) throw ValidationError("InvalidTorusParams", "max_steps must be at least 1");
}

struct TorusSample {
  double t = 0.0;
  double minR = 0.0;
  double meanR = 0.0;
  double lambda = 0.0;
  double spd_margin = 0.0;
  double g_norm = 0.0;
  double B_norm = 0.0;
  double phi_norm = 0.0;
};

inline constexpr const char* kTorusCsvHeader = "t,minR,meanR,lambda,spd_margin,g_norm,B_norm,phi_norm";

struct TorusDiagnostics {
  long steps = 0;
  double max_g_asymmetry = 0.0;      ///< max |g_ij - g_ji| over accepted states
  double max_B_symmetric_part = 0.0; ///< max |B_ij + B_ji|
  double max_rhs_asymmetry = 0.0;    ///< same for the right sides
  /// most negative (minR_{k+1} - minR_k) / (t_{k+1} - t_k) over recorded samples (0 if monotone)
  double worst_minR_rate = 0.0;
  double worst_lambda_rate = 0.0;
};

struct TorusTrace {
  std::vector<TorusSample> samples;
  TorusDiagnostics diagnostics;
  TorusFieldState final_state;
  bool completed = false;
  std::string status = "ok";
  std::string message;
  std::exception_ptr error;
};

namespace detail {

inline double rms(const std::vector<double>& v, std::size_t nodes) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(nodes));
}

inline void axpy(TorusFieldState& out, const TorusFieldState& base, double a, const TorusRhs& k) {
  for (std::size_t i = 0; i < out.g.size(); ++i) out.g[i] = base.g[i] + a * k.dg[i];
  for (std::size_t i = 0; i < out.B.size(); ++i) out.B[i] = base.B[i] + a * k.dB[i];
  for (std::size_t i = 0; i < out.phi.size(); ++i) out.phi[i] = base.phi[i] + a * k.dphi[i];
}

inline double asymmetry(const std::vector<double>& m, int d, double sign) {
  double r = 0.0;
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  for (std::size_t p = 0; p < m.size() / dd; ++p)
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        r = std::max(r, std::abs(m[p * dd + i * d + j] - sign * m[p * dd + j * d + i]));
  return r;
}

}  // namespace detail

inline double max_inverse_norm(const TorusFieldState& s) { return 1.0 / spd_margin(s); }

inline double stable_dt(const TorusFieldState& s, double c_cfl) {
  const double h = s.geo.h();
  return c_cfl * h * h / max_inverse_norm(s);
}

inline TorusSample sample_torus(const TorusFieldState& s, const Stencil& st, bool with_lambda,
                                const LambdaParams& lp, std::vector<double>* warm = nullptr) {
  TorusSample r;
  r.t = s.t;
  const std::vector<double> GR = generalized_scalar_field(s, st);
  r.minR = GR[0];
  double sum = 0.0;
  for (double x : GR) {
    r.minR = std::min(r.minR, x);
    sum += x;
  }
  const std::size_t n = s.geo.nodes();
  r.meanR = sum / static_cast<double>(n);
  if (with_lambda) {
    const LambdaResult lr = lambda_torus(s, st, lp, warm);
    r.lambda = lr.lambda;
    if (warm) *warm = lr.u;
  }
  r.spd_margin = spd_margin(s);
  r.g_norm = detail::rms(s.g, n);
  r.B_norm = detail::rms(s.B, n);
  r.phi_norm = detail::rms(s.phi, n);
  return r;
}

inline TorusRhs rhs_for(const TorusFieldState& s, const Stencil& st, const TorusParams& p) {
  return p.ricci_dilaton_only ? ricci_dilaton_rhs(s, st) : torus_rhs(s, st);
}

/// RK4 step of size dt.
inline TorusFieldState torus_step(const TorusFieldState& s, const Stencil& st, double dt, const TorusParams& p,
                                  double* rhs_asymmetry = nullptr) {
  const TorusRhs k1 = rhs_for(s, st, p);
  if (rhs_asymmetry) {
    const int d = s.d();
    *rhs_asymmetry = std::max(detail::asymmetry(k1.dg, d, 1.0), detail::asymmetry(k1.dB, d, -1.0));
  }
  TorusFieldState tmp = s;
  detail::axpy(tmp, s, 0.5 * dt, k1);
  const TorusRhs k2 = rhs_for(tmp, st, p);
  detail::axpy(tmp, s, 0.5 * dt, k2);
  const TorusRhs k3 = rhs_for(tmp, st, p);
  detail::axpy(tmp, s, dt, k3);
  const TorusRhs k4 = rhs_for(tmp, st, p);
  TorusFieldState out = s;
  for (std::size_t i = 0; i < out.g.size(); ++i)
    out.g[i] += dt / 6.0 * (k1.dg[i] + 2.0 * k2.dg[i] + 2.0 * k3.dg[i] + k4.dg[i]);
  for (std::size_t i = 0; i < out.B.size(); ++i)
    out.B[i] += dt / 6.0 * (k1.dB[i] + 2.0 * k2.dB[i] + 2.0 * k3.dB[i] + k4.dB[i]);
  for (std::size_t i = 0; i < out.phi.size(); ++i)
    out.phi[i] += dt / 6.0 * (k1.dphi[i] + 2.0 * k2.dphi[i] + 2.0 * k3.dphi[i] + k4.dphi[i]);
  out.t = s.t + dt;
  return out;
}

/// Runs RK4 to t + T; numerical failures stop the run and are reported in the trace.
inline TorusTrace try_run_torus_flow(const TorusFieldState& init, const TorusParams& p) {
  validate_params(p);
  validate_geometry(init.geo);
  if (init.d() == 2 && init.H0 != 0.0) throw ValidationError("InvalidTorus", "H0 must vanish on T^2");
  const Stencil st(init.geo);
  TorusTrace tr;
  TorusFieldState s = init;
  std::vector<double> warm;
  auto& dg = tr.diagnostics;
  const double t_end = init.t + p.T;
  try {
    tr.samples.push_back(sample_torus(s, st, p.compute_lambda, p.lambda, &warm));
    if (p.on_sample) p.on_sample(s, 0);
    long since = 0;
    while (s.t < t_end - 1e-12 * std::max(1.0, t_end)) {
      if (dg.steps >= p.max_steps) throw StepUnderflow("max_steps reached at t = " + std::to_string(s.t));
      double dt = p.dt_override > 0.0 ? p.dt_override : stable_dt(s, p.c_cfl);
      if (!(dt >= 1e-14)) throw StepUnderflow("stable step fell below 1e-14 at t = " + std::to_string(s.t));
      dt = std::min(dt, t_end - s.t);
      double rhs_asym = 0.0;
      s = torus_step(s, st, dt, p, &rhs_asym);
      if (t_end - s.t < 1e-12 * std::max(1.0, t_end)) s.t = t_end;
      ++dg.steps;
      dg.max_rhs_asymmetry = std::max(dg.max_rhs_asymmetry, rhs_asym);
      dg.max_g_asymmetry = std::max(dg.max_g_asymmetry, detail::asymmetry(s.g, s.d(), 1.0));
      dg.max_B_symmetric_part = std::max(dg.max_B_symmetric_part, detail::asymmetry(s.B, s.d(), -1.0));
      require_nondegenerate(s);
      if (++since >= p.record_every || s.t >= t_end) {
        since = 0;
        const TorusSample prev = tr.samples.back();
        tr.samples.push_back(sample_torus(s, st, p.compute_lambda, p.lambda, &warm));
        const TorusSample& cur = tr.samples.back();
        if (p.on_sample) p.on_sample(s, tr.samples.size() - 1);
        const double span = cur.t - prev.t;
        dg.worst_minR_rate = std::min(dg.worst_minR_rate, (cur.minR - prev.minR) / span);
        if (p.compute_lambda) dg.worst_lambda_rate = std::min(dg.worst_lambda_rate, (cur.lambda - prev.lambda) / span);
      }
    }
    tr.completed = true;
  } catch (const NumericalError& e) {
    tr.status = e.kind();
    tr.message = e.what();
    tr.error = std::current_exception();
  }
  tr.final_state = s;
  return tr;
}

inline TorusTrace run_torus_flow(const TorusFieldState& init, const TorusParams& p) {
  TorusTrace tr = try_run_torus_flow(init, p);
  if (!tr.completed) std::rethrow_exception(tr.error);
  return tr;
}

/// f(t) with f' = k^2 f^-2, f(0) = 1: homogeneous benchmark g(t) = f(t) Id.
inline double benchmark_scale(double k, double t) { return std::cbrt(1.0 + 3.0 * k * k * t); }

/// Binary dump: "GRFF", uint32 version, uint32 d, uint32 N, uint32 field count, then each field as
/// N^d little-endian float64 values in row-major node order. Fields: g_ij (i <= j), B_ij (i < j), phi.
inline void write_field_dump(const TorusFieldState& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("IoError", "cannot open " + path);
  const int d = s.d();
  const std::uint32_t version = 1, dim = static_cast<std::uint32_t>(d), N = static_cast<std::uint32_t>(s.geo.N);
  const std::uint32_t count = static_cast<std::uint32_t>(d * (d + 1) / 2 + d * (d - 1) / 2 + 1);
  out.write("GRFF", 4);
  for (std::uint32_t v : {version, dim, N, count}) out.write(reinterpret_cast<const char*>(&v), sizeof v);
  const std::size_t n = s.geo.nodes();
  auto write_field = [&](auto get) {
    for (std::size_t p = 0; p < n; ++p) {
      const double v = get(p);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  };
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) write_field([&](std::size_t p) { return s.gij(p, i, j); });
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) write_field([&](std::size_t p) { return s.Bij(p, i, j); });
  write_field([&](std::size_t p) { return s.phi[p]; });
}

/// Differential k-forms on a periodic grid of any dimension, components indexed by increasing index tuples.
class FormGrid {
 public:
  FormGrid(int dim, int N, double L) : dim_(dim), N_(N), h_(L / N) {
    nodes_ = 1;
    for (int a = 0; a < dim; ++a) nodes_ *= static_cast<std::size_t>(N);
  }
  int dim() const { return dim_; }
  std::size_t nodes() const { return nodes_; }

  /// Increasing index tuples of length k in lexicographic order.
  std::vector<std::vector<int>> tuples(int k) const {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int start) {
      if (static_cast<int>(cur.size()) == k) {
        out.push_back(cur);
        return;
      }
      for (int i = start; i < dim_; ++i) {
        cur.push_back(i);
        rec(i + 1);
        cur.pop_back();
      }
    };
    rec(0);
    return out;
  }

  double d1(const std::vector<double>& f, std::size_t p, int a) const {
    std::size_t stride = 1;
    for (int b = dim_ - 1; b > a; --b) stride *= static_cast<std::size_t>(N_);
    const int i = static_cast<int>((p / stride) % N_);
    auto at = [&](int off) {
      const int j = ((i + off) % N_ + N_) % N_;
      return f[p + (static_cast<std::ptrdiff_t>(j) - i) * static_cast<std::ptrdiff_t>(stride)];
    };
    return (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h_);
  }

  /// (d w)_{i0..ik} = sum_a (-1)^a D_{i_a} w_{i0..^i_a..ik}; w holds one field per k-tuple.
  std::vector<std::vector<double>> exterior_derivative(const std::vector<std::vector<double>>& w, int k) const {
    const auto in = tuples(k), out_t = tuples(k + 1);
    std::vector<std::vector<double>> out(out_t.size(), std::vector<double>(nodes_, 0.0));
    for (std::size_t o = 0; o < out_t.size(); ++o)
      for (int a = 0; a <= k; ++a) {
        std::vector<int> rest;
        for (int b = 0; b <= k; ++b)
          if (b != a) rest.push_back(out_t[o][b]);
        const std::size_t idx = static_cast<std::size_t>(std::find(in.begin(), in.end(), rest) - in.begin());
        const double sign = a % 2 == 0 ? 1.0 : -1.0;
        for (std::size_t p = 0; p < nodes_; ++p) out[o][p] += sign * d1(w[idx], p, out_t[o][a]);
      }
    return out;
  }

 private:
  int dim_, N_;
  double h_;
  std::size_t nodes_;
};

}  // namespace grf::torus
