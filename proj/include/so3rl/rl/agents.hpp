#pragma once

// Networks and losses for PPO, SAC and TD3. All networks run in float.

#include <Eigen/Core>
#include <json.hpp>

#include <memory>
#include <vector>

#include "so3rl/grad/checkpoint.hpp"
#include "so3rl/grad/nn.hpp"
#include "so3rl/rl/config.hpp"
#include "so3rl/rl/replay.hpp"

namespace so3rl::rl {

using T = grad::Tensor<Real>;
using Network = grad::Mlp<Real>;

RMat to_real(const Eigen::MatrixXd& m);
RMat row_of(const Eigen::VectorXd& v);
Eigen::VectorXd row_to_vector(const RMat& m, Eigen::Index row = 0);

// ---------------------------------------------------------------------------
// Mean transforms

/// Map from the last network layer to the action mean.
enum class MeanTransform { Identity, Tanh, Normalize, SvdProject };

std::string_view to_string(MeanTransform t);

/// PPO and TD3 squash tangent and Euler means with tanh and project
/// quaternion and matrix means when project_mean is set. Without projection
/// PPO leaves the mean linear and TD3 squashes it. SAC means are unbounded
/// Gaussian means squashed after sampling, so this is Identity for SAC.
MeanTransform mean_transform_for(Algo algo, Representation r, bool project_mean);

T apply_mean_transform(const T& x, MeanTransform t);

// ---------------------------------------------------------------------------
// Losses

/// Per-row min(r·A, clip(r, 1−ε, 1+ε)·A).
T ppo_surrogate(const T& ratio, const T& advantages, Real clip_eps);

struct Gae {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

/// Generalized advantage estimation over a rollout. next_values[i] is the
/// value of the state reached by step i; it is ignored where terminated[i].
/// episode_end[i] stops the recursion (termination or truncation).
Gae compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const Eigen::VectorXd& next_values,
                const std::vector<bool>& terminated, const std::vector<bool>& episode_end, double gamma,
                double lambda);

/// mean(α·log π − Q).
T sac_actor_loss(Real alpha, const T& log_prob, const T& q);

/// −mean(log α · (log π + target)). Descending this raises α when the policy
/// entropy is below target.
T sac_alpha_loss(const T& log_alpha, const RMat& log_prob, double target_entropy);

/// r + γ(1 − terminated)(min(q1, q2) − α·log π′). An empty next_log_prob means
/// no entropy term.
RMat clipped_double_q_target(const RMat& reward, const RMat& terminated, const RMat& q1, const RMat& q2,
                             const RMat& next_log_prob, Real alpha, Real gamma);

// ---------------------------------------------------------------------------
// Agents

class Agent {
 public:
  virtual ~Agent() = default;

  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;

  /// The action executed during evaluation, before decoding.
  virtual Eigen::VectorXd act_deterministic(const Eigen::VectorXd& obs) const = 0;

  /// Differential entropy of the exploration distribution averaged over
  /// `obs`; NaN when the policy has none.
  virtual double policy_entropy(const std::vector<Eigen::VectorXd>& obs) const = 0;

  virtual grad::NamedParameters<Real> named_parameters() const = 0;

  nlohmann::json checkpoint() const;
  void load_checkpoint(const nlohmann::json& doc);
};

class PpoAgent final : public Agent {
 public:
  PpoAgent(int obs_dim, int action_dim, const PpoConfig& config, MeanTransform transform, double log_std_init,
           Rng& rng);

  int obs_dim() const override { return pi_.in_dim(); }
  int action_dim() const override { return pi_.out_dim(); }

  T mean(const T& obs) const { return apply_mean_transform(pi_(obs), transform_); }
  const T& log_std() const { return log_std_; }
  T value(const T& obs) const { return v_(obs); }

  std::vector<T> parameters() const;

  Eigen::VectorXd act_deterministic(const Eigen::VectorXd& obs) const override;
  double policy_entropy(const std::vector<Eigen::VectorXd>& obs) const override;
  grad::NamedParameters<Real> named_parameters() const override;

 private:
  MeanTransform transform_;
  Network pi_, v_;
  T log_std_;
};

class SacAgent final : public Agent {
 public:
  SacAgent(int obs_dim, int action_dim, const SacConfig& config, Rng& rng);

  int obs_dim() const override { return actor_.in_dim(); }
  int action_dim() const override { return actor_.out_dim() / 2; }

  struct Head {
    T mean;
    T log_std;  // clamped
  };
  Head head(const T& obs) const;

  T q1(const T& obs, const T& action) const { return q1_(grad::concat_cols(obs, action)); }
  T q2(const T& obs, const T& action) const { return q2_(grad::concat_cols(obs, action)); }
  T q1_target(const T& obs, const T& action) const { return q1_targ_(grad::concat_cols(obs, action)); }
  T q2_target(const T& obs, const T& action) const { return q2_targ_(grad::concat_cols(obs, action)); }

  /// min(Q1, Q2) for one (obs, action) pair.
  double q_value(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;

  const T& log_alpha() const { return log_alpha_; }
  Real alpha() const { return std::exp(log_alpha_.item()); }

  std::vector<T> actor_parameters() const { return actor_.parameters(); }
  std::vector<T> critic_parameters() const;
  void update_targets(Real tau);

  Eigen::VectorXd act_deterministic(const Eigen::VectorXd& obs) const override;
  double policy_entropy(const std::vector<Eigen::VectorXd>& obs) const override;
  grad::NamedParameters<Real> named_parameters() const override;

 private:
  Network actor_, q1_, q2_, q1_targ_, q2_targ_;
  T log_alpha_;
};

class Td3Agent final : public Agent {
 public:
  Td3Agent(int obs_dim, int action_dim, const Td3Config& config, MeanTransform transform, Rng& rng);

  int obs_dim() const override { return actor_.in_dim(); }
  int action_dim() const override { return actor_.out_dim(); }

  T act(const T& obs) const { return apply_mean_transform(actor_(obs), transform_); }
  T act_target(const T& obs) const { return apply_mean_transform(actor_targ_(obs), transform_); }
  T q1(const T& obs, const T& action) const { return q1_(grad::concat_cols(obs, action)); }
  T q2(const T& obs, const T& action) const { return q2_(grad::concat_cols(obs, action)); }
  T q1_target(const T& obs, const T& action) const { return q1_targ_(grad::concat_cols(obs, action)); }
  T q2_target(const T& obs, const T& action) const { return q2_targ_(grad::concat_cols(obs, action)); }

  std::vector<T> actor_parameters() const { return actor_.parameters(); }
  std::vector<T> critic_parameters() const;
  void update_targets(Real tau);

  Eigen::VectorXd act_deterministic(const Eigen::VectorXd& obs) const override;
  /// Entropy of the additive exploration noise.
  double policy_entropy(const std::vector<Eigen::VectorXd>& obs) const override;
  grad::NamedParameters<Real> named_parameters() const override;

 private:
  MeanTransform transform_;
  double expl_noise_std_;
  Network actor_, actor_targ_, q1_, q2_, q1_targ_, q2_targ_;
};

/// Builds the agent a configuration trains, with freshly initialized weights.
std::unique_ptr<Agent> make_agent(const TrainConfig& config, int obs_dim, int action_dim, Rng& rng);

}  // namespace so3rl::rl
