#include "so3rl/env.hpp"

#include <cmath>
#include <iomanip>

namespace so3rl {

namespace {

void write_block(Eigen::Ref<Eigen::VectorXd> dst, const Rotation<double>& r) {
  const auto rm = r.row_major();
  for (int i = 0; i < 9; ++i) dst(i) = rm[i];
}

}  // namespace

std::string_view to_string(RewardMode m) { return m == RewardMode::Dense ? "dense" : "sparse"; }
std::string_view to_string(InitMode m) { return m == InitMode::Haar ? "haar" : "identity"; }

RewardMode parse_reward_mode(std::string_view s) {
  if (s == "dense") return RewardMode::Dense;
  if (s == "sparse") return RewardMode::Sparse;
  throw InvalidArgument("unknown reward mode '" + std::string(s) + "'");
}

InitMode parse_init_mode(std::string_view s) {
  if (s == "haar") return InitMode::Haar;
  if (s == "identity") return InitMode::Identity;
  throw InvalidArgument("unknown init mode '" + std::string(s) + "'");
}

void EnvConfig::validate() const {
  if (!(alpha_max > 0 && alpha_max < kPi<double>)) {
    throw InvalidArgument("env.alpha_max must lie in (0, pi)");
  }
  if (horizon < 1) throw InvalidArgument("env.horizon must be at least 1");
  if (!(success_threshold > 0) || !std::isfinite(success_threshold)) {
    throw InvalidArgument("env.success_threshold must be positive");
  }
  if (goal_angle && !(*goal_angle >= 0 && *goal_angle <= kPi<double>)) {
    throw InvalidArgument("env.goal_angle must lie in [0, pi]");
  }
  repr.validate();
}

void GoalEnv::set_goal(Eigen::Ref<Eigen::VectorXd> obs, std::span<const double> goal) const {
  const int g = goal_dim();
  if (static_cast<int>(goal.size()) != g || obs.size() < g) {
    throw InvalidArgument("set_goal: dimension mismatch");
  }
  for (int i = 0; i < g; ++i) obs(obs.size() - g + i) = goal[i];
}

Rotation<double> step_toward(const Rotation<double>& current, const Rotation<double>& desired,
                             double alpha_max) {
  const double d = geodesic_distance(current, desired);
  if (d < alpha_max) return desired;
  const Vector3<double> tau = log_map(current.inverse() * desired);
  return current * exp_map<double>(tau * (alpha_max / d));
}

double rotation_reward(std::span<const double> achieved, std::span<const double> desired,
                       RewardMode mode, double threshold) {
  const auto a = Rotation<double>::from_row_major(achieved);
  const auto b = Rotation<double>::from_row_major(desired);
  const double d = geodesic_distance(a, b);
  if (mode == RewardMode::Dense) return -d;
  return d <= threshold ? 0.0 : -1.0;
}

RotationEnv::RotationEnv(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  rng_.seed(config_.seed);
}

Observation RotationEnv::observe() const {
  Observation o;
  o.obs.resize(kObsDim);
  o.achieved_goal.resize(kGoalDim);
  o.desired_goal.resize(kGoalDim);
  write_block(o.obs.head<9>(), current_);
  write_block(o.obs.tail<9>(), goal_);
  write_block(o.achieved_goal, current_);
  write_block(o.desired_goal, goal_);
  return o;
}

Observation RotationEnv::reset() {
  current_ = config_.init == InitMode::Haar ? haar_random<double>(rng_) : Rotation<double>::identity();
  if (config_.goal_angle) {
    std::normal_distribution<double> normal;
    Vector3<double> axis;
    do {
      axis = Vector3<double>(normal(rng_), normal(rng_), normal(rng_));
    } while (axis.norm() < 1e-12);
    goal_ = exp_map<double>(axis.normalized() * *config_.goal_angle);
  } else {
    goal_ = haar_random<double>(rng_);
  }
  step_ = 0;
  started_ = true;
  done_ = false;
  return observe();
}

Observation RotationEnv::reset_to(const Rotation<double>& current, const Rotation<double>& goal) {
  current_ = current;
  goal_ = goal;
  step_ = 0;
  started_ = true;
  done_ = false;
  return observe();
}

StepResult RotationEnv::step(std::span<const double> raw_action) {
  if (!started_) throw StateError("step called before reset");
  if (done_) throw StateError("step called on a finished episode");
  const auto decoded = decode_action_detailed(raw_action, config_.repr, current_, config_.alpha_max);
  current_ = step_toward(current_, decoded.desired, config_.alpha_max);
  ++step_;

  StepResult r;
  r.observation = observe();
  const double d = geodesic_distance(current_, goal_);
  r.reward = config_.reward_mode == RewardMode::Dense ? -d : (d <= config_.success_threshold ? 0.0 : -1.0);
  r.truncated = step_ == config_.horizon;
  r.terminated = false;
  r.info.distance = d;
  r.info.success = d <= config_.success_threshold;
  r.info.degenerate = decoded.degenerate;
  done_ = r.truncated;
  return r;
}

double RotationEnv::compute_reward(std::span<const double> achieved,
                                   std::span<const double> desired) const {
  return rotation_reward(achieved, desired, config_.reward_mode, config_.success_threshold);
}

std::vector<StepResult> batch_step(std::span<RotationEnv> envs, const Eigen::MatrixXd& raw_actions) {
  if (raw_actions.rows() != static_cast<Eigen::Index>(envs.size())) {
    throw InvalidArgument("batch_step: one action row per environment is required");
  }
  std::vector<StepResult> out;
  out.reserve(envs.size());
  for (std::size_t i = 0; i < envs.size(); ++i) {
    if (raw_actions.cols() != envs[i].action_dim()) {
      throw InvalidArgument("batch_step: action width does not match the environment");
    }
    const Eigen::VectorXd row = raw_actions.row(static_cast<Eigen::Index>(i)).transpose();
    out.push_back(envs[i].step(std::span<const double>(row.data(), row.size())));
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows) {
  const Eigen::Index n = rows.empty() ? 0 : rows.front().raw_action.size();
  out << "step";
  for (char c : {'c', 'g'})
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ',' << c << i << j;
  for (Eigen::Index k = 0; k < n; ++k) out << ",a" << k;
  out << ",reward\n";
  out << std::setprecision(17);
  for (const auto& row : rows) {
    out << row.step;
    for (double v : row.current.row_major()) out << ',' << v;
    for (double v : row.goal.row_major()) out << ',' << v;
    for (Eigen::Index k = 0; k < row.raw_action.size(); ++k) out << ',' << row.raw_action(k);
    out << ',' << row.reward << '\n';
  }
}

}  // namespace so3rl
