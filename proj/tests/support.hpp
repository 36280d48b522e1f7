#pragma once

// Generators and independent oracles shared by the test executables.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "so3rl/so3.hpp"

namespace testsupport {

using so3rl::Matrix3;
using so3rl::Vector3;
using so3rl::Vector4;

inline constexpr double pi = so3rl::kPi<double>;

inline Vector3<double> random_unit3(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vector3<double> v;
  do {
    v = Vector3<double>(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

/// Uniform direction, norm uniform in [lo, hi].
inline Vector3<double> random_tangent(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return random_unit3(rng) * u(rng);
}

inline Vector4<double> random_gaussian4(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return {n(rng), n(rng), n(rng), n(rng)};
}

inline Matrix3<double> random_gaussian3x3(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix3<double> m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = n(rng);
  return m;
}

/// Rotation about a unit axis by an angle, built from the quaternion
/// (cos θ/2, sin θ/2·axis) entrywise; independent of exp_map.
inline Matrix3<double> axis_angle_matrix(const Vector3<double>& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  const double x = axis.x(), y = axis.y(), z = axis.z();
  Matrix3<double> m;
  m << t * x * x + c, t * x * y - s * z, t * x * z + s * y,
       t * x * y + s * z, t * y * y + c, t * y * z - s * x,
       t * x * z - s * y, t * y * z + s * x, t * z * z + c;
  return m;
}

/// Two-sample Kolmogorov–Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Critical value of the two-sample KS statistic at level 0.01.
inline double ks_critical_001(std::size_t n, std::size_t m) {
  return 1.628 * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

inline double excess_free_kurtosis(const std::vector<double>& x) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  double m2 = 0, m4 = 0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= x.size();
  m4 /= x.size();
  return m4 / (m2 * m2);
}

/// Central finite-difference gradient of a scalar function of a matrix.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2 * h);
  }
  return g;
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

}  // namespace testsupport
