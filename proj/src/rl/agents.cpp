#include "so3rl/rl/agents.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace so3rl::rl {

using grad::NoGradGuard;

RMat to_real(const Eigen::MatrixXd& m) { return m.cast<Real>(); }

RMat row_of(const Eigen::VectorXd& v) { return v.transpose().cast<Real>(); }

Eigen::VectorXd row_to_vector(const RMat& m, Eigen::Index row) {
  return m.row(row).transpose().cast<double>();
}

std::string_view to_string(MeanTransform t) {
  switch (t) {
    case MeanTransform::Identity: return "identity";
    case MeanTransform::Tanh: return "tanh";
    case MeanTransform::Normalize: return "normalize";
    case MeanTransform::SvdProject: return "svd_project";
  }
  return "?";
}

MeanTransform mean_transform_for(Algo algo, Representation r, bool project_mean) {
  if (algo == Algo::Sac) return MeanTransform::Identity;
  const bool manifold = r == Representation::Quaternion || r == Representation::Matrix;
  if (!manifold) return MeanTransform::Tanh;
  if (project_mean) return r == Representation::Quaternion ? MeanTransform::Normalize : MeanTransform::SvdProject;
  return algo == Algo::Ppo ? MeanTransform::Identity : MeanTransform::Tanh;
}

T apply_mean_transform(const T& x, MeanTransform t) {
  switch (t) {
    case MeanTransform::Identity: return x;
    case MeanTransform::Tanh: return grad::tanh(x);
    case MeanTransform::Normalize: return grad::normalize_rows(x);
    case MeanTransform::SvdProject: return grad::svd_project_rows(x);
  }
  return x;
}

T ppo_surrogate(const T& ratio, const T& advantages, Real clip_eps) {
  const T clipped = grad::clamp(ratio, Real(1) - clip_eps, Real(1) + clip_eps);
  return grad::minimum(ratio * advantages, clipped * advantages);
}

Gae compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, const Eigen::VectorXd& next_values,
                const std::vector<bool>& terminated, const std::vector<bool>& episode_end, double gamma,
                double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || next_values.size() != n || static_cast<Eigen::Index>(terminated.size()) != n ||
      static_cast<Eigen::Index>(episode_end.size()) != n) {
    throw InvalidArgument("compute_gae: length mismatch");
  }
  Gae g;
  g.advantages.resize(n);
  double next_adv = 0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const double bootstrap = terminated[i] ? 0.0 : gamma * next_values(i);
    const double delta = rewards(i) + bootstrap - values(i);
    next_adv = delta + (episode_end[i] ? 0.0 : gamma * lambda * next_adv);
    g.advantages(i) = next_adv;
  }
  g.returns = g.advantages + values;
  return g;
}

T sac_actor_loss(Real alpha, const T& log_prob, const T& q) { return grad::mean(log_prob * alpha - q); }

T sac_alpha_loss(const T& log_alpha, const RMat& log_prob, double target_entropy) {
  const RMat shifted = (log_prob.array() + static_cast<Real>(target_entropy)).matrix();
  return -grad::mean(log_alpha * T::constant(shifted));
}

RMat clipped_double_q_target(const RMat& reward, const RMat& terminated, const RMat& q1, const RMat& q2,
                             const RMat& next_log_prob, Real alpha, Real gamma) {
  RMat next = q1.cwiseMin(q2);
  if (next_log_prob.size() != 0) next -= alpha * next_log_prob;
  return (reward.array() + gamma * (Real(1) - terminated.array()) * next.array()).matrix();
}

// ---------------------------------------------------------------------------

nlohmann::json Agent::checkpoint() const { return grad::params_to_json(named_parameters()); }

void Agent::load_checkpoint(const nlohmann::json& doc) {
  auto params = named_parameters();
  grad::params_from_json(doc, params);
}

namespace {

void append(grad::NamedParameters<Real>& out, const Network& net, const std::string& prefix) {
  for (auto& p : net.named_parameters(prefix)) out.push_back(std::move(p));
}

double squashless_entropy(const RMat& log_std) {
  const double d = static_cast<double>(log_std.cols());
  return log_std.cast<double>().sum() / static_cast<double>(log_std.rows()) +
         0.5 * d * (1.0 + std::log(2.0 * std::numbers::pi));
}

}  // namespace

PpoAgent::PpoAgent(int obs_dim, int action_dim, const PpoConfig& config, MeanTransform transform,
                   double log_std_init, Rng& rng)
    : transform_(transform),
      pi_(obs_dim, config.hidden, action_dim, grad::Activation::Tanh, rng, 0.01),
      v_(obs_dim, config.hidden, 1, grad::Activation::Tanh, rng, 1.0),
      log_std_(T::parameter(RMat::Constant(1, action_dim, static_cast<Real>(log_std_init)))) {}

std::vector<T> PpoAgent::parameters() const {
  auto out = pi_.parameters();
  for (auto& p : v_.parameters()) out.push_back(p);
  out.push_back(log_std_);
  return out;
}

Eigen::VectorXd PpoAgent::act_deterministic(const Eigen::VectorXd& obs) const {
  NoGradGuard guard;
  return row_to_vector(mean(T::constant(row_of(obs))).value());
}

double PpoAgent::policy_entropy(const std::vector<Eigen::VectorXd>&) const {
  return squashless_entropy(log_std_.value());
}

grad::NamedParameters<Real> PpoAgent::named_parameters() const {
  grad::NamedParameters<Real> out;
  append(out, pi_, "pi");
  append(out, v_, "v");
  out.emplace_back("pi.log_std", log_std_);
  return out;
}

SacAgent::SacAgent(int obs_dim, int action_dim, const SacConfig& config, Rng& rng)
    : actor_(obs_dim, config.hidden, 2 * action_dim, grad::Activation::Relu, rng, 0.01),
      q1_(obs_dim + action_dim, config.hidden, 1, grad::Activation::Relu, rng),
      q2_(obs_dim + action_dim, config.hidden, 1, grad::Activation::Relu, rng),
      q1_targ_(q1_.clone()),
      q2_targ_(q2_.clone()),
      log_alpha_(T::parameter(RMat::Constant(1, 1, static_cast<Real>(std::log(config.init_alpha))))) {}

SacAgent::Head SacAgent::head(const T& obs) const {
  const T out = actor_(obs);
  const int d = action_dim();
  return {grad::slice_cols(out, 0, d), grad::clamp_log_std(grad::slice_cols(out, d, d))};
}

double SacAgent::q_value(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
  NoGradGuard guard;
  const T o = T::constant(row_of(obs));
  const T a = T::constant(row_of(action));
  return std::min(q1(o, a).item(), q2(o, a).item());
}

std::vector<T> SacAgent::critic_parameters() const {
  auto out = q1_.parameters();
  for (auto& p : q2_.parameters()) out.push_back(p);
  return out;
}

void SacAgent::update_targets(Real tau) {
  q1_targ_.polyak_from(q1_, tau);
  q2_targ_.polyak_from(q2_, tau);
}

Eigen::VectorXd SacAgent::act_deterministic(const Eigen::VectorXd& obs) const {
  NoGradGuard guard;
  return row_to_vector(grad::tanh(head(T::constant(row_of(obs))).mean).value());
}

double SacAgent::policy_entropy(const std::vector<Eigen::VectorXd>& obs) const {
  if (obs.empty()) return std::numeric_limits<double>::quiet_NaN();
  NoGradGuard guard;
  RMat batch(static_cast<Eigen::Index>(obs.size()), obs_dim());
  for (std::size_t i = 0; i < obs.size(); ++i) batch.row(static_cast<Eigen::Index>(i)) = row_of(obs[i]);
  return squashless_entropy(head(T::constant(batch)).log_std.value());
}

grad::NamedParameters<Real> SacAgent::named_parameters() const {
  grad::NamedParameters<Real> out;
  append(out, actor_, "actor");
  append(out, q1_, "q1");
  append(out, q2_, "q2");
  append(out, q1_targ_, "q1_targ");
  append(out, q2_targ_, "q2_targ");
  out.emplace_back("log_alpha", log_alpha_);
  return out;
}

Td3Agent::Td3Agent(int obs_dim, int action_dim, const Td3Config& config, MeanTransform transform, Rng& rng)
    : transform_(transform),
      expl_noise_std_(config.expl_noise_std),
      actor_(obs_dim, config.hidden, action_dim, grad::Activation::Relu, rng, 0.01),
      actor_targ_(actor_.clone()),
      q1_(obs_dim + action_dim, config.hidden, 1, grad::Activation::Relu, rng),
      q2_(obs_dim + action_dim, config.hidden, 1, grad::Activation::Relu, rng),
      q1_targ_(q1_.clone()),
      q2_targ_(q2_.clone()) {}

std::vector<T> Td3Agent::critic_parameters() const {
  auto out = q1_.parameters();
  for (auto& p : q2_.parameters()) out.push_back(p);
  return out;
}

void Td3Agent::update_targets(Real tau) {
  actor_targ_.polyak_from(actor_, tau);
  q1_targ_.polyak_from(q1_, tau);
  q2_targ_.polyak_from(q2_, tau);
}

Eigen::VectorXd Td3Agent::act_deterministic(const Eigen::VectorXd& obs) const {
  NoGradGuard guard;
  return row_to_vector(act(T::constant(row_of(obs))).value());
}

double Td3Agent::policy_entropy(const std::vector<Eigen::VectorXd>&) const {
  if (!(expl_noise_std_ > 0)) return std::numeric_limits<double>::quiet_NaN();
  return action_dim() * (std::log(expl_noise_std_) + 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)));
}

grad::NamedParameters<Real> Td3Agent::named_parameters() const {
  grad::NamedParameters<Real> out;
  append(out, actor_, "actor");
  append(out, actor_targ_, "actor_targ");
  append(out, q1_, "q1");
  append(out, q2_, "q2");
  append(out, q1_targ_, "q1_targ");
  append(out, q2_targ_, "q2_targ");
  return out;
}

std::unique_ptr<Agent> make_agent(const TrainConfig& config, int obs_dim, int action_dim, Rng& rng) {
  const auto r = config.env.repr.representation;
  const auto transform = mean_transform_for(config.algo, r, config.projection().project_mean);
  switch (config.algo) {
    case Algo::Ppo:
      return std::make_unique<PpoAgent>(obs_dim, action_dim, config.ppo, transform,
                                        config.ppo.resolved_log_std_init(r), rng);
    case Algo::Sac: return std::make_unique<SacAgent>(obs_dim, action_dim, config.sac, rng);
    case Algo::Td3: return std::make_unique<Td3Agent>(obs_dim, action_dim, config.td3, transform, rng);
  }
  throw InvalidArgument("unknown algorithm");
}

}  // namespace so3rl::rl
