#include <algorithm>
#include <numeric>

#include "loop.hpp"

namespace so3rl::rl {

namespace {

constexpr double kRatioTolerance = 1e-3;

struct Rollout {
  RMat obs, action;
  Eigen::VectorXd log_prob, value, reward, next_value;
  std::vector<bool> terminated, episode_end;

  Rollout(long n, int obs_dim, int action_dim)
      : obs(n, obs_dim), action(n, action_dim), log_prob(n), value(n), reward(n), next_value(n),
        terminated(n), episode_end(n) {}
};

double state_value(const PpoAgent& agent, const Eigen::VectorXd& obs) {
  grad::NoGradGuard guard;
  return agent.value(T::constant(row_of(obs))).item();
}

}  // namespace

RunRecord ppo_train(const TrainConfig& config, const EnvFactory& make_env, MeanTransform transform,
                    const TrainHooks& hooks) {
  const PpoConfig& pc = config.ppo;
  pc.validate();
  auto env = make_env(derive_seed(config.seed, streams::kTrainEnv));
  Rng init_rng(derive_seed(config.seed, streams::kInit));
  Rng policy_rng(derive_seed(config.seed, streams::kPolicy));
  const int od = env->obs_dim(), ad = env->action_dim();
  const auto repr = config.env.repr.representation;
  const bool project_samples = config.project_samples;

  PpoAgent agent(od, ad, pc, transform, pc.resolved_log_std_init(repr), init_rng);
  grad::Adam<Real> opt(agent.parameters(), pc.lr);
  const long total = config.resolved_steps();

  detail::Run run(config, make_env, hooks);
  return run.finish(agent, [&](long& env_steps) {
    Observation current = env->reset();
    while (env_steps < total) {
      const long n = std::min<long>(pc.rollout_len, total - env_steps);
      Rollout ro(n, od, ad);

      for (long i = 0; i < n; ++i) {
        const RMat obs = row_of(current.obs);
        RMat raw;
        {
          grad::NoGradGuard guard;
          const T o = T::constant(obs);
          const T mean = agent.mean(o);
          raw = mean.value() + (agent.log_std().value().array().exp() *
                                grad::standard_normal<Real>(1, ad, policy_rng).array()).matrix();
          ro.log_prob(i) = grad::gaussian_log_prob(mean, agent.log_std(), T::constant(raw)).item();
          ro.value(i) = agent.value(o).item();
        }
        Eigen::VectorXd action = row_to_vector(raw);
        if (project_samples) action = mean_projection(action, repr);

        const StepResult step = env->step(detail::as_span(action));
        ro.obs.row(i) = obs;
        ro.action.row(i) = row_of(action);
        ro.reward(i) = step.reward;
        ro.terminated[i] = step.terminated;
        ro.episode_end[i] = step.terminated || step.truncated;
        ro.next_value(i) = step.terminated ? 0.0 : state_value(agent, step.observation.obs);
        current = ro.episode_end[i] ? env->reset() : step.observation;

        ++env_steps;
        run.after_step(agent, env_steps);
      }

      const Gae gae = compute_gae(ro.reward, ro.value, ro.next_value, ro.terminated, ro.episode_end, pc.gamma,
                                  pc.gae_lambda);

      // Stored log-probabilities must describe the stored actions under the
      // policy that sampled them.
      if (!project_samples) {
        grad::NoGradGuard guard;
        const T lp = grad::gaussian_log_prob(agent.mean(T::constant(ro.obs)), agent.log_std(),
                                             T::constant(ro.action));
        const double drift = (lp.value().cast<double>() - ro.log_prob).cwiseAbs().maxCoeff();
        if (drift > kRatioTolerance) {
          throw StateError("ppo: stored log-probabilities disagree with the sampled actions");
        }
      }

      std::vector<long> order(n);
      std::iota(order.begin(), order.end(), 0L);
      for (int epoch = 0; epoch < pc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), policy_rng);
        for (long start = 0; start < n; start += pc.minibatch) {
          const long m = std::min<long>(pc.minibatch, n - start);
          RMat obs(m, od), act(m, ad), old_lp(m, 1), adv(m, 1), ret(m, 1);
          for (long j = 0; j < m; ++j) {
            const long k = order[start + j];
            obs.row(j) = ro.obs.row(k);
            act.row(j) = ro.action.row(k);
            old_lp(j, 0) = static_cast<Real>(ro.log_prob(k));
            adv(j, 0) = static_cast<Real>(gae.advantages(k));
            ret(j, 0) = static_cast<Real>(gae.returns(k));
          }
          if (m > 1) {
            const Real mu = adv.mean();
            const Real sd = std::sqrt((adv.array() - mu).square().sum() / static_cast<Real>(m));
            adv = ((adv.array() - mu) / (sd + Real(1e-8))).matrix();
          }

          const T o = T::constant(obs);
          const T lp = grad::gaussian_log_prob(agent.mean(o), agent.log_std(), T::constant(act));
          const T ratio = grad::exp(lp - T::constant(old_lp));
          const T policy_loss = -grad::mean(ppo_surrogate(ratio, T::constant(adv), static_cast<Real>(pc.clip_eps)));
          const T value_loss = grad::mean(grad::square(agent.value(o) - T::constant(ret)));
          T loss = policy_loss + value_loss * static_cast<Real>(pc.value_coef);
          if (pc.entropy_coef != 0) {
            loss = loss - grad::mean(grad::gaussian_entropy(agent.log_std())) * static_cast<Real>(pc.entropy_coef);
          }
          detail::check_finite(loss, "ppo loss");

          opt.zero_grad();
          loss.backward();
          grad::clip_grad_norm(opt.params(), pc.max_grad_norm);
          opt.step();
        }
      }
    }
  });
}

}  // namespace so3rl::rl
