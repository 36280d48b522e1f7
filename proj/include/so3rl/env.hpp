#pragma once

// Goal-conditioned rotation environment. The agent outputs a desired
// orientation (through a ReprSpec decoding) and the orientation moves along
// the geodesic toward it by at most alpha_max per step.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "so3rl/random.hpp"
#include "so3rl/repr.hpp"
#include "so3rl/so3.hpp"

namespace so3rl {

enum class RewardMode { Dense, Sparse };
enum class InitMode { Haar, Identity };

std::string_view to_string(RewardMode m);
std::string_view to_string(InitMode m);
RewardMode parse_reward_mode(std::string_view s);
InitMode parse_init_mode(std::string_view s);

struct EnvConfig {
  double alpha_max = kPi<double> / 10;
  int horizon = 50;
  RewardMode reward_mode = RewardMode::Dense;
  double success_threshold = kPi<double> / 10;
  ReprSpec repr;
  std::uint64_t seed = 0;
  InitMode init = InitMode::Haar;
  /// When set, goals are exp(goal_angle · u) for a uniform unit axis u
  /// instead of Haar samples.
  std::optional<double> goal_angle;

  void validate() const;
};

struct Observation {
  Eigen::VectorXd obs;            // observation; the goal occupies the last goal_dim entries
  Eigen::VectorXd achieved_goal;
  Eigen::VectorXd desired_goal;
};

struct StepInfo {
  double distance = 0;     // to the goal after the step
  bool success = false;
  bool degenerate = false;  // decoding used a projection fallback
};

struct StepResult {
  Observation observation;
  double reward = 0;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

/// Interface the trainers see. Goal-free environments report goal_dim() == 0.
class GoalEnv {
 public:
  virtual ~GoalEnv() = default;

  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int goal_dim() const = 0;
  virtual int horizon() const = 0;

  virtual Observation reset() = 0;
  virtual StepResult step(std::span<const double> raw_action) = 0;

  /// Pure reward function of (achieved, desired) goals; used for relabeling.
  virtual double compute_reward(std::span<const double> achieved,
                                std::span<const double> desired) const = 0;

  /// Writes the goal block of `obs` (the last goal_dim entries).
  void set_goal(Eigen::Ref<Eigen::VectorXd> obs, std::span<const double> goal) const;
};

/// One step of the idealized dynamics: returns `desired` when it lies within
/// alpha_max of `current`, otherwise the point at distance alpha_max along
/// the geodesic from `current` toward `desired`.
Rotation<double> step_toward(const Rotation<double>& current, const Rotation<double>& desired,
                             double alpha_max);

/// Dense: −d(achieved, desired). Sparse: 0 if d ≤ threshold, else −1.
/// Throws InvalidArgument unless both blocks are rotations within 1e-6.
double rotation_reward(std::span<const double> achieved, std::span<const double> desired,
                       RewardMode mode, double threshold);

class RotationEnv final : public GoalEnv {
 public:
  static constexpr int kObsDim = 18;
  static constexpr int kGoalDim = 9;

  explicit RotationEnv(EnvConfig config);

  int obs_dim() const override { return kObsDim; }
  int action_dim() const override { return config_.repr.action_dim(); }
  int goal_dim() const override { return kGoalDim; }
  int horizon() const override { return config_.horizon; }

  Observation reset() override;
  /// Starts an episode from the given state without consuming randomness.
  Observation reset_to(const Rotation<double>& current, const Rotation<double>& goal);

  StepResult step(std::span<const double> raw_action) override;

  double compute_reward(std::span<const double> achieved,
                        std::span<const double> desired) const override;

  const EnvConfig& config() const { return config_; }
  const Rotation<double>& current() const { return current_; }
  const Rotation<double>& goal() const { return goal_; }
  int step_count() const { return step_; }
  bool done() const { return done_; }
  bool started() const { return started_; }

  Observation observe() const;

 private:
  EnvConfig config_;
  Rng rng_;
  Rotation<double> current_;
  Rotation<double> goal_;
  int step_ = 0;
  bool started_ = false;
  bool done_ = false;
};

/// Steps envs[i] with row i of `raw_actions`; identical to calling step on
/// each environment in order.
std::vector<StepResult> batch_step(std::span<RotationEnv> envs, const Eigen::MatrixXd& raw_actions);

struct TrajectoryRow {
  int step = 0;
  Rotation<double> current;
  Rotation<double> goal;
  Eigen::VectorXd raw_action;
  double reward = 0;
};

/// Columns: step, c00..c22, g00..g22, a0..a{n-1}, reward.
void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows);

}  // namespace so3rl
