#include "so3rl/rl/train.hpp"

#include <cmath>

#include "loop.hpp"

namespace so3rl::rl {

EnvFactory rotation_env_factory(const EnvConfig& config) {
  return [config](std::uint64_t seed) {
    EnvConfig c = config;
    c.seed = seed;
    return std::make_unique<RotationEnv>(c);
  };
}

CurveRow evaluate(const Agent& agent, GoalEnv& env, int episodes, long env_steps) {
  std::vector<double> returns;
  std::vector<Eigen::VectorXd> seen;
  double successes = 0, norm_sum = 0;
  long actions = 0;
  for (int e = 0; e < episodes; ++e) {
    Observation o = env.reset();
    double ret = 0;
    bool success = false;
    for (;;) {
      seen.push_back(o.obs);
      const Eigen::VectorXd a = agent.act_deterministic(o.obs);
      norm_sum += a.norm();
      ++actions;
      const StepResult s = env.step(detail::as_span(a));
      ret += s.reward;
      success = s.info.success;
      if (s.terminated || s.truncated) break;
      o = s.observation;
    }
    returns.push_back(ret);
    successes += success ? 1 : 0;
  }
  const Eigen::Map<const Eigen::VectorXd> r(returns.data(), static_cast<Eigen::Index>(returns.size()));
  CurveRow row;
  row.env_steps = env_steps;
  row.eval_return_mean = r.mean();
  row.eval_return_std = std::sqrt((r.array() - r.mean()).square().mean());
  row.success_rate = successes / episodes;
  row.policy_entropy = agent.policy_entropy(seen);
  row.mean_action_norm = norm_sum / static_cast<double>(actions);
  return row;
}

RunRecord train(const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  const auto factory = rotation_env_factory(config.env);
  const auto transform =
      mean_transform_for(config.algo, config.env.repr.representation, config.projection().project_mean);
  switch (config.algo) {
    case Algo::Ppo: return ppo_train(config, factory, transform, hooks);
    case Algo::Sac: return sac_train(config, factory, hooks);
    case Algo::Td3: return td3_train(config, factory, transform, hooks);
  }
  throw InvalidArgument("unknown algorithm");
}

Observation BanditEnv::reset() {
  active_ = true;
  Observation o;
  o.obs = Eigen::VectorXd::Ones(1);
  return o;
}

StepResult BanditEnv::step(std::span<const double> raw_action) {
  if (!active_) throw StateError("bandit: step without reset");
  if (raw_action.size() != 1 || !std::isfinite(raw_action[0])) throw InvalidArgument("bandit: bad action");
  active_ = false;
  StepResult r;
  r.observation.obs = Eigen::VectorXd::Ones(1);
  r.reward = -std::abs(raw_action[0] - 0.5);
  r.terminated = true;
  r.info.distance = -r.reward;
  r.info.success = r.info.distance < 0.05;
  return r;
}

double BanditEnv::compute_reward(std::span<const double>, std::span<const double>) const {
  throw InvalidArgument("bandit: no goals to relabel");
}

}  // namespace so3rl::rl
