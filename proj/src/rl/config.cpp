#include "so3rl/rl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace so3rl::rl {

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw InvalidArgument(key + ": " + what);
}

void check_hidden(const std::vector<int>& hidden, const std::string& key) {
  require(!hidden.empty(), key, "needs at least one layer");
  for (int h : hidden) require(h > 0, key, "layer widths must be positive");
}

bool finite_positive(double v) { return std::isfinite(v) && v > 0; }

}  // namespace

std::string_view to_string(Algo a) {
  switch (a) {
    case Algo::Ppo: return "ppo";
    case Algo::Sac: return "sac";
    case Algo::Td3: return "td3";
  }
  return "?";
}

Algo parse_algo(std::string_view s) {
  if (s == "ppo") return Algo::Ppo;
  if (s == "sac") return Algo::Sac;
  if (s == "td3") return Algo::Td3;
  throw InvalidArgument("unknown algorithm '" + std::string(s) + "'");
}

void PpoConfig::validate() const {
  require(clip_eps > 0 && clip_eps < 1, "ppo.clip_eps", "must lie in (0, 1)");
  require(gamma > 0 && gamma <= 1, "ppo.gamma", "must lie in (0, 1]");
  require(gae_lambda >= 0 && gae_lambda <= 1, "ppo.gae_lambda", "must lie in [0, 1]");
  require(entropy_coef >= 0 && std::isfinite(entropy_coef), "ppo.entropy_coef", "must be non-negative");
  require(value_coef >= 0 && std::isfinite(value_coef), "ppo.value_coef", "must be non-negative");
  require(finite_positive(lr), "ppo.lr", "must be positive");
  require(finite_positive(max_grad_norm), "ppo.max_grad_norm", "must be positive");
  require(rollout_len >= 1, "ppo.rollout_len", "must be at least 1");
  require(minibatch >= 1 && minibatch <= rollout_len, "ppo.minibatch", "must lie in [1, rollout_len]");
  require(epochs >= 1, "ppo.epochs", "must be at least 1");
  if (log_std_init) {
    require(std::isfinite(*log_std_init), "ppo.log_std_init", "must be finite");
  }
  check_hidden(hidden, "ppo.hidden");
}

void OffPolicyCommon::validate(const char* prefix) const {
  const std::string p(prefix);
  require(gamma > 0 && gamma <= 1, p + ".gamma", "must lie in (0, 1]");
  require(tau_polyak > 0 && tau_polyak < 1, p + ".tau_polyak", "must lie in (0, 1)");
  require(finite_positive(lr), p + ".lr", "must be positive");
  require(batch >= 1, p + ".batch", "must be at least 1");
  require(buffer_size >= batch, p + ".buffer_size", "must hold at least one batch");
  require(start_steps >= 0, p + ".start_steps", "must be non-negative");
  require(update_after >= 0, p + ".update_after", "must be non-negative");
  require(update_every >= 1, p + ".update_every", "must be at least 1");
  require(her_k >= 0, p + ".her_k", "must be non-negative");
  check_hidden(hidden, p + ".hidden");
}

void SacConfig::validate() const {
  OffPolicyCommon::validate("sac");
  require(finite_positive(init_alpha), "sac.init_alpha", "must be positive");
  if (target_entropy) require(std::isfinite(*target_entropy), "sac.target_entropy", "must be finite");
}

void Td3Config::validate() const {
  OffPolicyCommon::validate("td3");
  require(expl_noise_std >= 0 && std::isfinite(expl_noise_std), "td3.expl_noise_std", "must be non-negative");
  require(target_noise_std >= 0 && std::isfinite(target_noise_std), "td3.target_noise_std", "must be non-negative");
  require(target_noise_clip >= 0 && std::isfinite(target_noise_clip), "td3.target_noise_clip", "must be non-negative");
  require(policy_delay >= 1, "td3.policy_delay", "must be at least 1");
}

void TrainConfig::validate() const {
  require(!env.repr.scaled || (env.repr.representation == Representation::Tangent && env.repr.frame == Frame::Delta),
          "scaled", "is only valid for the delta tangent representation");
  env.validate();
  if (steps) require(*steps >= 1, "steps", "must be at least 1");
  require(eval.interval >= 1, "eval.interval", "must be at least 1");
  require(eval.episodes >= 1, "eval.episodes", "must be at least 1");
  require(!(algo == Algo::Ppo && env.reward_mode == RewardMode::Sparse), "reward",
          "sparse rewards are only supported for sac and td3 (hindsight relabeling)");
  require(!(algo == Algo::Sac && project_mean.value_or(false)), "project_mean",
          "sac keeps its squashed actions off-manifold; project_mean must be false");
  require(!(project_samples && algo != Algo::Ppo), "project_samples", "is only defined for ppo");
  for (char c : tag) {
    require(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.', "tag",
            "may only contain letters, digits, '-' and '.'");
  }
  switch (algo) {
    case Algo::Ppo: ppo.validate(); break;
    case Algo::Sac: sac.validate(); break;
    case Algo::Td3: td3.validate(); break;
  }
}

std::string TrainConfig::run_name() const {
  std::string repr(so3rl::to_string(env.repr.representation));
  if (env.repr.scaled) repr += "-scaled";
  if (project_samples) repr += "-projsamples";
  if (!tag.empty()) repr += "-" + tag;
  return std::string(to_string(algo)) + "_" + repr + "_" + std::string(so3rl::to_string(env.repr.frame)) + "_" +
         std::string(so3rl::to_string(env.reward_mode)) + "_s" + std::to_string(seed);
}

}  // namespace so3rl::rl
