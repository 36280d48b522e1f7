#pragma once

// Action parameterizations: how a Euclidean policy output becomes a desired
// orientation. Four representations, each usable as a global target or as a
// delta composed onto the current orientation.

#include <Eigen/Core>

#include <span>
#include <string>
#include <string_view>

#include "so3rl/so3.hpp"

namespace so3rl {

enum class Representation { Matrix, Quaternion, Tangent, Euler };
enum class Frame { Global, Delta };

std::string_view to_string(Representation r);
std::string_view to_string(Frame f);
Representation parse_representation(std::string_view s);
Frame parse_frame(std::string_view s);

int ambient_dim(Representation r);

struct ReprSpec {
  Representation representation = Representation::Tangent;
  Frame frame = Frame::Delta;
  bool scaled = false;  // only meaningful for (Tangent, Delta)

  /// Throws InvalidArgument for scaled non-tangent or global specs.
  static ReprSpec make(Representation r, Frame f, bool scaled = false);

  void validate() const;
  int action_dim() const { return ambient_dim(representation); }

  /// `repr=<matrix|quat|tangent|euler>,frame=<global|delta>,scaled=<bool>`
  std::string to_string() const;
  static ReprSpec parse(std::string_view text);

  /// Short parameterization name used in tables and run names: matrix,
  /// dmatrix, quat, dquat, tangent, dtangent, stangent, euler, deuler.
  std::string short_name() const;
  static ReprSpec from_short_name(std::string_view name);

  friend bool operator==(const ReprSpec&, const ReprSpec&) = default;
};

/// Where projections onto the representation manifold are applied by a
/// stochastic or deterministic policy.
struct ProjectionPolicy {
  bool project_mean = true;
  bool project_samples = false;

  friend bool operator==(const ProjectionPolicy&, const ProjectionPolicy&) = default;
};

struct DecodedAction {
  Rotation<double> desired;
  bool degenerate = false;  // projection fallback was used
};

/// Raw policy output -> desired orientation R_a.
///  matrix:     svd_project(reshape row-major)
///  quaternion: quat_normalize then quat_to_matrix
///  tangent:    exp_map(pi·raw); scaled delta uses alpha_max·raw with the
///              Euclidean norm clipped to alpha_max
///  euler:      roll, yaw = pi·raw[0], pi·raw[2]; pitch = pi/2·raw[1]
/// Delta frames compose the result onto `current`.
DecodedAction decode_action_detailed(std::span<const double> raw, const ReprSpec& spec,
                                     const Rotation<double>& current, double alpha_max);

inline Rotation<double> decode_action(std::span<const double> raw, const ReprSpec& spec,
                                      const Rotation<double>& current, double alpha_max) {
  return decode_action_detailed(raw, spec, current, alpha_max).desired;
}

/// Euler angles a raw euler action encodes, already in canonical range.
EulerAngles<double> euler_from_raw(std::span<const double> raw);

/// Projects a raw mean onto the representation's manifold in ambient
/// coordinates (normalize for quaternions, SVD for matrices, identity for
/// tangent and euler). The differentiable counterpart lives in grad/nn.hpp.
Eigen::VectorXd mean_projection(const Eigen::VectorXd& raw_mean, Representation r);

}  // namespace so3rl
