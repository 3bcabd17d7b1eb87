#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace grf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Variance : unsigned char { Lower, Upper };

/// Dense order-k tensor over an n-dimensional space, row-major, with a
/// per-slot variance record.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int dim, int order, Variance v = Variance::Lower)
      : n_(dim), k_(order), data_(ipow(dim, order), 0.0), var_(order, v) {}

  int dim() const { return n_; }
  int order() const { return k_; }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  template <class... I>
  double& operator()(I... idx) {
    static_assert(sizeof...(I) > 0);
    assert(static_cast<int>(sizeof...(I)) == k_);
    return data_[offset(idx...)];
  }
  template <class... I>
  double operator()(I... idx) const {
    assert(static_cast<int>(sizeof...(I)) == k_);
    return data_[offset(idx...)];
  }
  double& flat(std::size_t i) { return data_[i]; }
  double flat(std::size_t i) const { return data_[i]; }

  Variance variance(int slot) const { return var_[slot]; }
  void set_variance(int slot, Variance v) { var_[slot] = v; }

  Tensor& operator+=(const Tensor& o) {
    assert(o.size() == size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    assert(o.size() == size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }
  friend Tensor operator-(Tensor a) { return a *= -1.0; }

  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
  }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  static std::size_t ipow(int n, int k) {
    std::size_t r = 1;
    for (int i = 0; i < k; ++i) r *= static_cast<std::size_t>(n);
    return r;
  }

 private:
  template <class... I>
  std::size_t offset(I... idx) const {
    std::size_t o = 0;
    ((o = o * static_cast<std::size_t>(n_) + static_cast<std::size_t>(idx)), ...);
    return o;
  }

  int n_ = 0;
  int k_ = 0;
  std::vector<double> data_;
  std::vector<Variance> var_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  assert(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat(i) - b.flat(i)));
  return m;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// out_{..a..} = sum_b M(a,b) t_{..b..} on the given slot.
inline Tensor contract_slot(const Tensor& t, int slot, const Matrix& M) {
  const int n = t.dim();
  const std::size_t inner = Tensor::ipow(n, t.order() - slot - 1);
  const std::size_t outer = Tensor::ipow(n, slot);
  Tensor out = t;
  out.set_zero();
  for (std::size_t o = 0; o < outer; ++o)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double m = M(a, b);
        if (m == 0.0) continue;
        const double* src = t.data() + (o * n + b) * inner;
        double* dst = out.data() + (o * n + a) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += m * src[i];
      }
  return out;
}

inline Tensor raise(const Tensor& t, int slot, const Matrix& eta_inv) {
  Tensor out = contract_slot(t, slot, eta_inv);
  out.set_variance(slot, Variance::Upper);
  return out;
}

inline Tensor lower(const Tensor& t, int slot, const Matrix& eta) {
  Tensor out = contract_slot(t, slot, eta);
  out.set_variance(slot, Variance::Lower);
  return out;
}

/// Slot s of the output is slot perm[s] of the input, so {1,0,2} gives
/// out(i,j,k) = t(j,i,k).
inline Tensor permute_slots(const Tensor& t, const std::vector<int>& perm) {
  const int n = t.dim(), k = t.order();
  Tensor out(n, k);
  for (int s = 0; s < k; ++s) out.set_variance(s, t.variance(perm[s]));
  std::vector<int> idx(k, 0), src(k, 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    std::size_t r = flat;
    for (int s = k - 1; s >= 0; --s) {
      idx[s] = static_cast<int>(r % n);
      r /= n;
    }
    for (int s = 0; s < k; ++s) src[perm[s]] = idx[s];
    std::size_t o = 0;
    for (int s = 0; s < k; ++s) o = o * n + src[s];
    out.flat(flat) = t.flat(o);
  }
  return out;
}

inline Tensor swap_slots(const Tensor& t, int i, int j) {
  std::vector<int> perm(t.order());
  for (int s = 0; s < t.order(); ++s) perm[s] = s;
  std::swap(perm[i], perm[j]);
  return permute_slots(t, perm);
}

inline Matrix to_matrix(const Tensor& t) {
  assert(t.order() == 2);
  const int n = t.dim();
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = t(i, j);
  return m;
}

inline Tensor from_matrix(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  Tensor t(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t(i, j) = m(i, j);
  return t;
}

/// Seeded source of reproducible random data.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double normal() { return normal_(gen_); }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * std::generate_canonical<double, 53>(gen_);
  }
  Matrix normal_matrix(int r, int c) {
    Matrix m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }
  Vector normal_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }
  Tensor normal_tensor(int n, int k) {
    Tensor t(n, k);
    for (std::size_t i = 0; i < t.size(); ++i) t.flat(i) = normal();
    return t;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace grf
