#pragma once

// Training configuration for the three algorithms. Defaults are desk-scale
// choices; every field is reachable from the run configuration file.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "so3rl/env.hpp"
#include "so3rl/repr.hpp"

namespace so3rl::rl {

enum class Algo { Ppo, Sac, Td3 };

std::string_view to_string(Algo a);
Algo parse_algo(std::string_view s);

struct PpoConfig {
  double clip_eps = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double lr = 3e-4;
  double max_grad_norm = 0.5;
  int rollout_len = 2048;
  int minibatch = 64;
  int epochs = 10;
  /// Unset means 0, or −2 for Euler actions.
  std::optional<double> log_std_init;
  std::vector<int> hidden{64, 64};

  double resolved_log_std_init(Representation r) const {
    return log_std_init.value_or(r == Representation::Euler ? -2.0 : 0.0);
  }
  void validate() const;
};

struct OffPolicyCommon {
  double gamma = 0.99;
  double tau_polyak = 0.005;
  double lr = 3e-4;
  int batch = 256;
  long buffer_size = 1'000'000;
  long start_steps = 1000;
  long update_after = 1000;
  int update_every = 1;
  int her_k = 4;  // relabels per transition; used with sparse rewards
  std::vector<int> hidden{256, 256, 256};

  void validate(const char* prefix) const;
};

struct SacConfig : OffPolicyCommon {
  /// Unset means −action_dim.
  std::optional<double> target_entropy;
  bool auto_alpha = true;
  double init_alpha = 0.2;

  double resolved_target_entropy(int action_dim) const {
    return target_entropy.value_or(-static_cast<double>(action_dim));
  }
  void validate() const;
};

struct Td3Config : OffPolicyCommon {
  double expl_noise_std = 0.1;
  double target_noise_std = 0.2;
  double target_noise_clip = 0.5;
  int policy_delay = 2;

  void validate() const;
};

struct EvalConfig {
  long interval = 10000;
  int episodes = 10;
};

struct TrainConfig {
  static constexpr int kSchemaVersion = 1;

  Algo algo = Algo::Sac;
  EnvConfig env;  // carries repr, reward mode and success threshold
  std::uint64_t seed = 0;
  /// Unset means 1M for PPO and 300k otherwise.
  std::optional<long> steps;
  /// Unset means true for PPO and TD3 and false for SAC.
  std::optional<bool> project_mean;
  bool project_samples = false;
  EvalConfig eval;
  PpoConfig ppo;
  SacConfig sac;
  Td3Config td3;
  std::string tag;
  bool save_buffer = false;

  long resolved_steps() const { return steps.value_or(algo == Algo::Ppo ? 1'000'000 : 300'000); }
  ProjectionPolicy projection() const {
    return {project_mean.value_or(algo != Algo::Sac), project_samples};
  }
  bool uses_her() const { return algo != Algo::Ppo && env.reward_mode == RewardMode::Sparse; }

  /// Throws InvalidArgument naming the offending key.
  void validate() const;

  /// `<algo>_<repr>_<frame>_<reward>_s<seed>`; variants (scaled tangent,
  /// projected samples, tag) extend the repr token.
  std::string run_name() const;
};

}  // namespace so3rl::rl
