#pragma once

// Training loops. Each trainer owns its environments (built through the
// factory from derived seeds) and returns the complete run record.

#include <functional>
#include <memory>

#include "so3rl/env.hpp"
#include "so3rl/rl/agents.hpp"
#include "so3rl/rl/config.hpp"
#include "so3rl/rl/record.hpp"

namespace so3rl::rl {

using EnvFactory = std::function<std::unique_ptr<GoalEnv>(std::uint64_t seed)>;

struct TrainHooks {
  std::function<void(const CurveRow&)> on_eval;
};

/// RotationEnv instances sharing `config` except for the seed.
EnvFactory rotation_env_factory(const EnvConfig& config);

/// Runs `episodes` deterministic episodes on `env`.
CurveRow evaluate(const Agent& agent, GoalEnv& env, int episodes, long env_steps);

RunRecord ppo_train(const TrainConfig& config, const EnvFactory& make_env, MeanTransform transform,
                    const TrainHooks& hooks = {});
RunRecord sac_train(const TrainConfig& config, const EnvFactory& make_env, const TrainHooks& hooks = {});
RunRecord td3_train(const TrainConfig& config, const EnvFactory& make_env, MeanTransform transform,
                    const TrainHooks& hooks = {});

/// Validates the configuration and trains on the rotation environment. A
/// non-finite loss ends the run with status NanAbort and the record so far.
RunRecord train(const TrainConfig& config, const TrainHooks& hooks = {});

/// One-step bandit with constant observation 1 and reward −|a − 0.5|.
class BanditEnv final : public GoalEnv {
 public:
  int obs_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int goal_dim() const override { return 0; }
  int horizon() const override { return 1; }

  Observation reset() override;
  StepResult step(std::span<const double> raw_action) override;
  double compute_reward(std::span<const double> achieved, std::span<const double> desired) const override;

 private:
  bool active_ = false;
};

}  // namespace so3rl::rl
