#pragma once

// Rotation geometry on SO(3): validated rotation type, unit quaternions,
// Euler angles (intrinsic Z-Y-X), exponential/logarithm maps, projections
// from ambient space, geodesic distance and Haar sampling.
//
// Everything is templated on the scalar type and header-only. Rotations are
// serialized as row-major 9-tuples throughout the project.

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>

#include "so3rl/errors.hpp"

namespace so3rl {

template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;

template <typename Scalar>
inline constexpr Scalar kPi = std::numbers::pi_v<Scalar>;

/// Below this rotation angle exp/log switch to second-order Taylor series.
inline constexpr double kTaylorThreshold = 1e-8;
/// Tolerance used when a matrix is accepted as a Rotation from outside.
inline constexpr double kRotationTolerance = 1e-6;

template <typename Scalar>
Matrix3<Scalar> hat(const Vector3<Scalar>& w) {
  Matrix3<Scalar> m;
  m << Scalar(0), -w.z(), w.y(),
       w.z(), Scalar(0), -w.x(),
       -w.y(), w.x(), Scalar(0);
  return m;
}

template <typename Scalar>
Vector3<Scalar> vee(const Matrix3<Scalar>& m) {
  return Vector3<Scalar>(m(2, 1), m(0, 2), m(1, 0));
}

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  Scalar r = std::remainder(a, Scalar(2) * kPi<Scalar>);
  if (r <= -kPi<Scalar>) r += Scalar(2) * kPi<Scalar>;
  return r;
}

template <typename Scalar>
Scalar orthogonality_error(const Matrix3<Scalar>& m) {
  return (m.transpose() * m - Matrix3<Scalar>::Identity()).norm();
}

template <typename Scalar>
bool is_rotation(const Matrix3<Scalar>& m, Scalar tol) {
  if (!m.allFinite()) return false;
  return orthogonality_error(m) <= tol && std::abs(m.determinant() - Scalar(1)) <= tol;
}

// ---------------------------------------------------------------------------
// Rotation

/// An element of SO(3) stored as a 3x3 matrix. Construction from arbitrary
/// matrices is validated; the geometry functions below produce rotations
/// directly.
template <typename Scalar = double>
class Rotation {
 public:
  using Matrix = Matrix3<Scalar>;

  Rotation() : m_(Matrix::Identity()) {}

  static Rotation identity() { return Rotation(); }

  /// Throws InvalidArgument unless mᵀm = I and det m = 1 within tol.
  static Rotation from_matrix(const Matrix& m, Scalar tol = Scalar(kRotationTolerance)) {
    if (!is_rotation(m, tol)) {
      throw InvalidArgument("matrix is not a rotation (orthogonality error " +
                            std::to_string(static_cast<double>(orthogonality_error(m))) +
                            ", det " + std::to_string(static_cast<double>(m.determinant())) + ")");
    }
    return Rotation(m);
  }

  /// Trusts the caller; used by the closed-form constructions in this header.
  static Rotation assume_valid(const Matrix& m) { return Rotation(m); }

  static Rotation from_row_major(std::span<const Scalar> v, Scalar tol = Scalar(kRotationTolerance)) {
    if (v.size() != 9) throw InvalidArgument("rotation needs 9 row-major entries");
    Matrix m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = v[3 * i + j];
    return from_matrix(m, tol);
  }

  const Matrix& matrix() const { return m_; }
  Scalar operator()(int i, int j) const { return m_(i, j); }

  std::array<Scalar, 9> row_major() const {
    std::array<Scalar, 9> out{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out[3 * i + j] = m_(i, j);
    return out;
  }

  template <typename Other>
  Rotation<Other> cast() const {
    return Rotation<Other>::assume_valid(m_.template cast<Other>());
  }

  Rotation inverse() const { return Rotation(m_.transpose()); }

  friend Rotation operator*(const Rotation& a, const Rotation& b) { return Rotation(a.m_ * b.m_); }

  Vector3<Scalar> operator*(const Vector3<Scalar>& v) const { return m_ * v; }

 private:
  explicit Rotation(const Matrix& m) : m_(m) {}

  Matrix m_;
};

template <typename Scalar>
Rotation<Scalar> compose(const Rotation<Scalar>& a, const Rotation<Scalar>& b) {
  return a * b;
}

template <typename Scalar>
Rotation<Scalar> inverse(const Rotation<Scalar>& r) {
  return r.inverse();
}

/// Result of a projection onto a manifold; `degenerate` marks inputs where
/// the projection is not unique and a deterministic fallback was used.
template <typename T>
struct Projected {
  T value;
  bool degenerate = false;
};

// ---------------------------------------------------------------------------
// Unit quaternions, Hamilton convention, coefficients ordered (w, x, y, z).

template <typename Scalar = double>
class UnitQuaternion {
 public:
  UnitQuaternion() : q_(Scalar(1), Scalar(0), Scalar(0), Scalar(0)) {}

  /// Throws InvalidArgument unless the coefficients have unit norm within tol.
  static UnitQuaternion from_coeffs(const Vector4<Scalar>& wxyz, Scalar tol = Scalar(1e-9)) {
    if (!wxyz.allFinite() || std::abs(wxyz.squaredNorm() - Scalar(1)) > tol) {
      throw InvalidArgument("quaternion coefficients are not unit norm");
    }
    return UnitQuaternion(wxyz);
  }

  static UnitQuaternion assume_valid(const Vector4<Scalar>& wxyz) { return UnitQuaternion(wxyz); }

  Scalar w() const { return q_(0); }
  Scalar x() const { return q_(1); }
  Scalar y() const { return q_(2); }
  Scalar z() const { return q_(3); }
  const Vector4<Scalar>& coeffs() const { return q_; }
  Vector3<Scalar> vec() const { return q_.template tail<3>(); }

  UnitQuaternion operator-() const { return UnitQuaternion(-q_); }

  /// Hemisphere representative: w >= 0, and for w == 0 the first nonzero of
  /// (x, y, z) is positive.
  UnitQuaternion canonical() const {
    if (q_(0) < Scalar(0)) return UnitQuaternion(-q_);
    if (q_(0) == Scalar(0)) {
      for (int i = 1; i < 4; ++i) {
        if (q_(i) != Scalar(0)) return q_(i) < Scalar(0) ? UnitQuaternion(-q_) : *this;
      }
    }
    return *this;
  }

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
    const Scalar w = a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z();
    const Scalar x = a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y();
    const Scalar y = a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x();
    const Scalar z = a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w();
    return UnitQuaternion(Vector4<Scalar>(w, x, y, z));
  }

 private:
  explicit UnitQuaternion(const Vector4<Scalar>& q) : q_(q) {}

  Vector4<Scalar> q_;
};

/// q = v / |v|. Inputs with |v| < 1e-12 map to the identity and are flagged.
template <typename Scalar>
Projected<UnitQuaternion<Scalar>> quat_normalize(const Vector4<Scalar>& v) {
  const Scalar n = v.norm();
  if (!(n >= Scalar(1e-12)) || !std::isfinite(n)) return {UnitQuaternion<Scalar>(), true};
  return {UnitQuaternion<Scalar>::assume_valid(v / n), false};
}

template <typename Scalar>
Rotation<Scalar> quat_to_matrix(const UnitQuaternion<Scalar>& q) {
  const Scalar w = q.w(), x = q.x(), y = q.y(), z = q.z();
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  const Scalar xy = x * y, xz = x * z, yz = y * z;
  const Scalar wx = w * x, wy = w * y, wz = w * z;
  Matrix3<Scalar> m;
  m << Scalar(1) - Scalar(2) * (yy + zz), Scalar(2) * (xy - wz), Scalar(2) * (xz + wy),
       Scalar(2) * (xy + wz), Scalar(1) - Scalar(2) * (xx + zz), Scalar(2) * (yz - wx),
       Scalar(2) * (xz - wy), Scalar(2) * (yz + wx), Scalar(1) - Scalar(2) * (xx + yy);
  return Rotation<Scalar>::assume_valid(m);
}

/// Shepperd's method; returns the hemisphere representative.
template <typename Scalar>
UnitQuaternion<Scalar> matrix_to_quat(const Rotation<Scalar>& r) {
  const auto& m = r.matrix();
  const Scalar tr = m.trace();
  Vector4<Scalar> q;
  if (tr > Scalar(0)) {
    const Scalar s = std::sqrt(tr + Scalar(1)) * Scalar(2);
    q << s / Scalar(4), (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + m(0, 0) - m(1, 1) - m(2, 2)) * Scalar(2);
    q << (m(2, 1) - m(1, 2)) / s, s / Scalar(4), (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + m(1, 1) - m(0, 0) - m(2, 2)) * Scalar(2);
    q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, s / Scalar(4), (m(1, 2) + m(2, 1)) / s;
  } else {
    const Scalar s = std::sqrt(Scalar(1) + m(2, 2) - m(0, 0) - m(1, 1)) * Scalar(2);
    q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, s / Scalar(4);
  }
  q.normalize();
  return UnitQuaternion<Scalar>::assume_valid(q).canonical();
}

// ---------------------------------------------------------------------------
// Exponential and logarithm maps

/// Rodrigues' formula. |tau| below the Taylor threshold uses the series
/// A = 1 - θ²/6, B = 1/2 - θ²/24 for the coefficients of hat(tau) and hat(tau)².
template <typename Scalar>
Rotation<Scalar> exp_map(const Vector3<Scalar>& tau) {
  if (!tau.allFinite()) throw InvalidArgument("exp_map: non-finite tangent vector");
  const Scalar theta2 = tau.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  Scalar a, b;
  if (theta < Scalar(kTaylorThreshold)) {
    a = Scalar(1) - theta2 / Scalar(6);
    b = Scalar(0.5) - theta2 / Scalar(24);
  } else {
    a = std::sin(theta) / theta;
    const Scalar half = std::sin(theta / Scalar(2)) / theta;
    b = Scalar(2) * half * half;
  }
  const Matrix3<Scalar> w = hat(tau);
  return Rotation<Scalar>::assume_valid(Matrix3<Scalar>::Identity() + a * w + b * (w * w));
}

/// Rotation angle in [0, pi], computed as atan2(sin, cos) from the skew and
/// trace parts so it stays accurate near 0 and pi.
template <typename Scalar>
Scalar rotation_angle(const Matrix3<Scalar>& m) {
  const Scalar c = std::clamp((m.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  const Scalar s = (vee<Scalar>(m - m.transpose()) / Scalar(2)).norm();
  return std::atan2(s, c);
}

template <typename Scalar>
Scalar rotation_angle(const Rotation<Scalar>& r) {
  return rotation_angle(r.matrix());
}

/// Principal-branch logarithm, |result| in [0, pi]. At angle pi the axis is
/// taken from the symmetric part and its sign fixed so that the first nonzero
/// component is positive.
template <typename Scalar>
Vector3<Scalar> log_map(const Rotation<Scalar>& r) {
  const auto& m = r.matrix();
  const Vector3<Scalar> skew = vee<Scalar>(m - m.transpose()) / Scalar(2);  // sin(θ)·axis
  const Scalar s = skew.norm();
  const Scalar c = std::clamp((m.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  const Scalar theta = std::atan2(s, c);

  if (theta < Scalar(kTaylorThreshold)) return skew * (Scalar(1) + s * s / Scalar(6));
  if (c > Scalar(-0.9)) return skew * (theta / s);

  // Near pi: (m + mᵀ)/2 - cI = (1 - c) a aᵀ.
  Matrix3<Scalar> sym = (m + m.transpose()) / Scalar(2);
  sym.diagonal().array() -= c;
  int k = 0;
  sym.diagonal().maxCoeff(&k);
  Vector3<Scalar> axis = sym.col(k) / std::sqrt(sym(k, k));
  axis.normalize();
  const Scalar proj = axis.dot(skew);
  if (std::abs(proj) > Scalar(1e-12)) {
    if (proj < Scalar(0)) axis = -axis;
  } else {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis(i)) > Scalar(1e-12)) {
        if (axis(i) < Scalar(0)) axis = -axis;
        break;
      }
    }
  }
  return theta * axis;
}

/// Validating overload for raw matrices.
template <typename Scalar>
Vector3<Scalar> log_map(const Matrix3<Scalar>& m) {
  return log_map(Rotation<Scalar>::from_matrix(m));
}

/// d(R1, R2) = arccos((tr(R1ᵀR2) - 1) / 2), evaluated through rotation_angle.
template <typename Scalar>
Scalar geodesic_distance(const Rotation<Scalar>& a, const Rotation<Scalar>& b) {
  return rotation_angle<Scalar>(a.matrix().transpose() * b.matrix());
}

/// Exp(max_angle · Log(r)/|Log(r)|) when r rotates by more than max_angle,
/// otherwise r itself.
template <typename Scalar>
Rotation<Scalar> scale_rotation(const Rotation<Scalar>& r, Scalar max_angle) {
  if (!(max_angle > Scalar(0)) || !std::isfinite(max_angle)) {
    throw InvalidArgument("scale_rotation: max_angle must be positive");
  }
  const Vector3<Scalar> tau = log_map(r);
  const Scalar angle = tau.norm();
  if (angle <= max_angle) return r;
  return exp_map<Scalar>(tau * (max_angle / angle));
}

// ---------------------------------------------------------------------------
// Projection of arbitrary 3x3 matrices

/// Nearest rotation in Frobenius norm: R = U diag(1, 1, det(UVᵀ)) Vᵀ.
/// The flag marks inputs whose signed singular values s_2 + s_3 vanish, where
/// the nearest rotation is not unique.
template <typename Scalar>
Projected<Rotation<Scalar>> svd_project(const Matrix3<Scalar>& m) {
  if (!m.allFinite()) throw InvalidArgument("svd_project: non-finite matrix");
  Eigen::JacobiSVD<Matrix3<Scalar>> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3<Scalar> u = svd.matrixU();
  const Matrix3<Scalar>& v = svd.matrixV();
  const Vector3<Scalar>& sigma = svd.singularValues();
  const Scalar d = (u * v.transpose()).determinant() < Scalar(0) ? Scalar(-1) : Scalar(1);
  u.col(2) *= d;
  const Scalar gap = sigma(1) + d * sigma(2);
  const bool degenerate = !(gap > Scalar(1e-6) * std::max(sigma(0), Scalar(1)));
  return {Rotation<Scalar>::assume_valid(u * v.transpose()), degenerate};
}

// ---------------------------------------------------------------------------
// Euler angles: R = Rz(yaw) · Ry(pitch) · Rx(roll)

template <typename Scalar = double>
struct EulerAngles {
  Scalar roll = 0;   // phi, about x
  Scalar pitch = 0;  // theta, about y
  Scalar yaw = 0;    // psi, about z
};

template <typename Scalar>
Rotation<Scalar> euler_to_matrix(const EulerAngles<Scalar>& e) {
  const Scalar cr = std::cos(e.roll), sr = std::sin(e.roll);
  const Scalar cp = std::cos(e.pitch), sp = std::sin(e.pitch);
  const Scalar cy = std::cos(e.yaw), sy = std::sin(e.yaw);
  Matrix3<Scalar> m;
  m << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp, cp * sr, cp * cr;
  return Rotation<Scalar>::assume_valid(m);
}

/// roll, yaw in (-pi, pi]; pitch in [-pi/2, pi/2]. At gimbal lock roll is set
/// to zero and the free angle is folded into yaw.
template <typename Scalar>
EulerAngles<Scalar> matrix_to_euler(const Rotation<Scalar>& r) {
  const auto& m = r.matrix();
  const Scalar cp = std::hypot(m(0, 0), m(1, 0));
  EulerAngles<Scalar> e;
  if (cp > Scalar(1e-9)) {
    e.pitch = std::atan2(-m(2, 0), cp);
    e.roll = std::atan2(m(2, 1), m(2, 2));
    e.yaw = std::atan2(m(1, 0), m(0, 0));
  } else {
    e.pitch = m(2, 0) < Scalar(0) ? kPi<Scalar> / Scalar(2) : -kPi<Scalar> / Scalar(2);
    e.roll = Scalar(0);
    e.yaw = std::atan2(-m(0, 1), m(1, 1));
  }
  e.roll = wrap_angle(e.roll);
  e.yaw = wrap_angle(e.yaw);
  return e;
}

/// Maps any angle triple to the canonical range describing the same rotation,
/// using (roll, pitch, yaw) ~ (roll + pi, pi - pitch, yaw + pi).
template <typename Scalar>
EulerAngles<Scalar> canonical_euler(const EulerAngles<Scalar>& e) {
  const Scalar half_pi = kPi<Scalar> / Scalar(2);
  Scalar pitch = wrap_angle(e.pitch);
  Scalar roll = e.roll, yaw = e.yaw;
  if (pitch > half_pi) {
    pitch = kPi<Scalar> - pitch;
    roll += kPi<Scalar>;
    yaw += kPi<Scalar>;
  } else if (pitch < -half_pi) {
    pitch = -kPi<Scalar> - pitch;
    roll += kPi<Scalar>;
    yaw += kPi<Scalar>;
  }
  return {wrap_angle(roll), pitch, wrap_angle(yaw)};
}

// ---------------------------------------------------------------------------
// Sampling

/// Uniform rotation w.r.t. the Haar measure: a normalized 4-vector of
/// independent standard normals is uniform on S³.
template <typename Scalar = double, typename Urbg>
Rotation<Scalar> haar_random(Urbg& rng) {
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  for (;;) {
    Vector4<Scalar> v;
    v(0) = normal(rng);
    v(1) = normal(rng);
    v(2) = normal(rng);
    v(3) = normal(rng);
    const auto q = quat_normalize(v);
    if (!q.degenerate) return quat_to_matrix(q.value);
  }
}

}  // namespace so3rl
