#pragma once

// Diagnostic probes. Every function here only reads its inputs.

#include <Eigen/Core>
#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "so3rl/env.hpp"
#include "so3rl/random.hpp"
#include "so3rl/repr.hpp"
#include "so3rl/rl/agents.hpp"
#include "so3rl/rl/record.hpp"

namespace so3rl::analysis {

/// Rotations as Lie-algebra points, one per row, with |p| ≤ π.
struct PointCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;
  Representation representation = Representation::Quaternion;
  double sigma = 0;
  bool squashed = false;
  bool clipped = false;

  nlohmann::json meta() const;
};

/// Samples raw ~ N(0, σ²I) in the ambient action space, optionally squashes
/// with tanh and clips to [−1, 1], decodes as a global action and takes the
/// log of the resulting rotation.
PointCloud noise_projection_cloud(Representation r, double sigma, long n, bool squash, bool clip, Rng& rng);

void write_cloud_csv(std::ostream& out, const PointCloud& cloud);
/// Reads x,y,z rows; throws InvalidArgument if a point lies outside the π-ball.
Eigen::Matrix<double, Eigen::Dynamic, 3> read_cloud_csv(std::istream& in);

/// Mean of tr(R) = 1 + 2cos|p|.
double mean_trace(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points);
/// Raw kurtosis m4/m2² of each coordinate.
Eigen::Vector3d axis_kurtosis(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points);
/// Fraction of points whose ZYX pitch satisfies |θ| > π/2 − margin.
double pitch_fraction(const Eigen::Matrix<double, Eigen::Dynamic, 3>& points, double margin);

/// Tabular probe output. The first column is the abscissa, ascending.
struct ProbeReport {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::json meta = nlohmann::json::object();

  void write_csv(std::ostream& out) const;
};

using Critic = std::function<double(const Eigen::VectorXd& obs, const Eigen::VectorXd& action)>;

/// Q along the quaternion great circle q ⊗ (cos s, sin s·n), s ∈ [0, π], with
/// n the unit direction of `direction` (a body-frame tangent vector at q).
/// Points are equally spaced in arc length, so the path runs from q to −q
/// and passes R(q)·exp(θn) at s = θ/2. Columns: s, q_value.
ProbeReport double_cover_probe(const ReprSpec& spec, const Critic& critic, const Eigen::VectorXd& obs,
                               const UnitQuaternion<double>& q, const Eigen::Vector3d& direction, int n_points);

/// Quaternion coefficients at arc parameter s of the probe path.
Eigen::Vector4d double_cover_point(const UnitQuaternion<double>& q, const Eigen::Vector3d& direction, double s);

struct DoubleCoverSummary {
  int states = 0;
  int antipode_at_least_quarter = 0;  // Q(−q) ≥ Q(s = π/4)
  nlohmann::json detail;
};

/// Probes `states` Haar-random (start, goal) states of the environment with
/// the SAC policy's own quaternion action and the direction toward the goal.
DoubleCoverSummary double_cover_study(const rl::SacAgent& agent, const EnvConfig& env, int states, int n_points,
                                      std::uint64_t seed);

/// Mean action norm per step for each (level, policy) pair, over `episodes`
/// evaluation episodes starting at the identity with goals at angle π.
ProbeReport entropy_norm_probe(const std::vector<std::pair<double, const rl::Agent*>>& policies, EnvConfig env,
                               int episodes, std::uint64_t seed);

/// Pitch histogram of stored achieved goals per training quarter. Bins split
/// (−π/2, π/2] evenly; columns: bin_center, bin_lo, bin_hi, q1..q4 counts.
/// `total_steps` ≤ 0 uses the last recorded step + 1.
ProbeReport buffer_pitch_histogram(const std::vector<rl::BufferGoal>& goals, int bins, long total_steps = 0);

/// Fraction of a quarter's goals with |θ| > π/2 − margin.
double quarter_singularity_fraction(const std::vector<rl::BufferGoal>& goals, int quarter, double margin,
                                    long total_steps = 0);

/// Monotone non-decreasing up to at most `allowed` inversions.
bool nearly_monotone(const std::vector<double>& values, int allowed);

}  // namespace so3rl::analysis
