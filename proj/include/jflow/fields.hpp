#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "jflow/errors.hpp"

namespace jflow {

/// Per-point complex dimension never exceeds this; keeps the small matrices
/// on the stack.
inline constexpr int kMaxDim = 4;

using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

enum class Normalization { MeanZero, SupZero };

struct ScalarField {
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(std::size_t points, double fill = 0.0) : values(points, fill) {}
  explicit ScalarField(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  double min() const { return *std::min_element(values.begin(), values.end()); }
  double max() const { return *std::max_element(values.begin(), values.end()); }
  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
  }
};

/// Grid samples of a real Kähler potential. Only the complex Hessian and X(phi)
/// enter the geometry, so the additive constant is a gauge choice.
struct PotentialField {
  std::vector<double> values;
  Normalization normalization = Normalization::MeanZero;

  PotentialField() = default;
  explicit PotentialField(std::size_t points, double fill = 0.0) : values(points, fill) {}
  explicit PotentialField(std::vector<double> v, Normalization norm = Normalization::MeanZero)
      : values(std::move(v)), normalization(norm) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
};

inline PotentialField operator+(const PotentialField& a, const PotentialField& b) {
  PotentialField r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

inline PotentialField operator-(const PotentialField& a, const PotentialField& b) {
  PotentialField r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

inline PotentialField operator*(double s, const PotentialField& a) {
  PotentialField r = a;
  for (auto& x : r.values) x *= s;
  return r;
}

/// (1-t) a + t b, pointwise.
inline PotentialField lerp(const PotentialField& a, const PotentialField& b, double t) {
  PotentialField r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (1.0 - t) * a[i] + t * b[i];
  return r;
}

/// Field of real symmetric n x n matrices (the Hermitian coefficient matrices
/// h_{i jbar} of a (1,1)-form; every backend here produces real ones). Only the
/// upper triangle is stored, so symmetry holds at the storage level.
class HermitianFormField {
 public:
  HermitianFormField() = default;
  HermitianFormField(int dim, std::size_t points)
      : dim_(dim), points_(points), data_(points * packed_size(dim), 0.0) {}

  static constexpr std::size_t packed_size(int n) { return static_cast<std::size_t>(n * (n + 1) / 2); }

  int dim() const { return dim_; }
  std::size_t points() const { return points_; }

  double entry(std::size_t p, int i, int j) const { return data_[p * packed_size(dim_) + index(i, j)]; }
  void set(std::size_t p, int i, int j, double v) { data_[p * packed_size(dim_) + index(i, j)] = v; }
  void add(std::size_t p, int i, int j, double v) { data_[p * packed_size(dim_) + index(i, j)] += v; }

  SmallMat matrix(std::size_t p) const {
    SmallMat m(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j) m(i, j) = m(j, i) = entry(p, i, j);
    return m;
  }
  void set_matrix(std::size_t p, const SmallMat& m) {
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j) set(p, i, j, 0.5 * (m(i, j) + m(j, i)));
  }

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  /// Set by build_metric (and by refresh_kahler_flag): true when every
  /// pointwise minimum eigenvalue exceeds the positivity floor.
  bool kahler_metric() const { return kahler_; }
  double min_eigenvalue() const { return min_eig_; }

  void refresh_kahler_flag(double floor) {
    min_eig_ = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < points_; ++p) min_eig_ = std::min(min_eig_, min_eigenvalue_at(p));
    kahler_ = min_eig_ > floor;
  }

  double min_eigenvalue_at(std::size_t p) const {
    if (dim_ == 1) return entry(p, 0, 0);
    if (dim_ == 2) {
      const double a = entry(p, 0, 0), b = entry(p, 0, 1), d = entry(p, 1, 1);
      const double half_tr = 0.5 * (a + d);
      const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
      return half_tr - disc;
    }
    Eigen::SelfAdjointEigenSolver<SmallMat> es(matrix(p), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

  double det_at(std::size_t p) const {
    if (dim_ == 1) return entry(p, 0, 0);
    if (dim_ == 2) return entry(p, 0, 0) * entry(p, 1, 1) - entry(p, 0, 1) * entry(p, 0, 1);
    return matrix(p).determinant();
  }

  HermitianFormField& operator+=(const HermitianFormField& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    kahler_ = false;
    return *this;
  }
  HermitianFormField& operator*=(double s) {
    for (auto& x : data_) x *= s;
    kahler_ = false;
    return *this;
  }

 private:
  int index(int i, int j) const {
    if (i > j) std::swap(i, j);
    // row-major upper triangle
    return i * dim_ - i * (i - 1) / 2 + (j - i);
  }

  int dim_ = 0;
  std::size_t points_ = 0;
  std::vector<double> data_;
  bool kahler_ = false;
  double min_eig_ = 0.0;
};

inline HermitianFormField operator+(HermitianFormField a, const HermitianFormField& b) {
  a += b;
  return a;
}

inline HermitianFormField operator*(double s, HermitianFormField a) {
  a *= s;
  return a;
}

}  // namespace jflow
