#include "loop.hpp"

namespace so3rl::rl {

RunRecord sac_train(const TrainConfig& config, const EnvFactory& make_env, const TrainHooks& hooks) {
  const SacConfig& sc = config.sac;
  sc.validate();
  auto env = make_env(derive_seed(config.seed, streams::kTrainEnv));
  Rng init_rng(derive_seed(config.seed, streams::kInit));
  Rng policy_rng(derive_seed(config.seed, streams::kPolicy));
  Rng replay_rng(derive_seed(config.seed, streams::kReplay));
  Rng her_rng(derive_seed(config.seed, streams::kHer));
  const int od = env->obs_dim(), ad = env->action_dim();
  const bool her = config.uses_her() && env->goal_dim() > 0;
  const double target_entropy = sc.resolved_target_entropy(ad);
  const Real gamma = static_cast<Real>(sc.gamma);

  SacAgent agent(od, ad, sc, init_rng);
  grad::Adam<Real> actor_opt(agent.actor_parameters(), sc.lr);
  grad::Adam<Real> critic_opt(agent.critic_parameters(), sc.lr);
  grad::Adam<Real> alpha_opt({agent.log_alpha()}, sc.lr);
  ReplayBuffer buffer(od, ad, sc.buffer_size);
  const long total = config.resolved_steps();

  auto update = [&] {
    const Batch b = buffer.sample(sc.batch, replay_rng);
    const Real alpha = agent.alpha();

    RMat y;
    {
      grad::NoGradGuard guard;
      const T next = T::constant(b.next_obs);
      const auto h = agent.head(next);
      const auto s = grad::squashed_gaussian_sample(h.mean, h.log_std,
                                                    grad::standard_normal<Real>(sc.batch, ad, policy_rng));
      y = clipped_double_q_target(b.reward, b.terminated, agent.q1_target(next, s.action).value(),
                                  agent.q2_target(next, s.action).value(), s.log_prob.value(), alpha, gamma);
    }
    const T o = T::constant(b.obs);
    const T a = T::constant(b.action);
    const T target = T::constant(y);
    const T critic_loss = grad::mean(grad::square(agent.q1(o, a) - target)) +
                          grad::mean(grad::square(agent.q2(o, a) - target));
    detail::check_finite(critic_loss, "sac critic loss");
    critic_opt.zero_grad();
    critic_loss.backward();
    critic_opt.step();

    const auto h = agent.head(o);
    const auto s = grad::squashed_gaussian_sample(h.mean, h.log_std,
                                                  grad::standard_normal<Real>(sc.batch, ad, policy_rng));
    const T q = grad::minimum(agent.q1(o, s.action), agent.q2(o, s.action));
    const T actor_loss = sac_actor_loss(alpha, s.log_prob, q);
    detail::check_finite(actor_loss, "sac actor loss");
    actor_opt.zero_grad();
    actor_loss.backward();
    actor_opt.step();

    if (sc.auto_alpha) {
      const T alpha_loss = sac_alpha_loss(agent.log_alpha(), s.log_prob.value(), target_entropy);
      detail::check_finite(alpha_loss, "sac temperature loss");
      alpha_opt.zero_grad();
      alpha_loss.backward();
      alpha_opt.step();
    }
    agent.update_targets(static_cast<Real>(sc.tau_polyak));
  };

  detail::Run run(config, make_env, hooks);
  return run.finish(agent, [&](long& env_steps) {
    Observation current = env->reset();
    std::vector<Transition> episode;
    while (env_steps < total) {
      Eigen::VectorXd action;
      if (env_steps < sc.start_steps) {
        action = detail::uniform_action(ad, policy_rng);
      } else {
        grad::NoGradGuard guard;
        const auto h = agent.head(T::constant(row_of(current.obs)));
        const auto s = grad::squashed_gaussian_sample(h.mean, h.log_std,
                                                      grad::standard_normal<Real>(1, ad, policy_rng));
        action = row_to_vector(s.action.value());
      }
      const StepResult step = env->step(detail::as_span(action));
      Transition t{current.obs, action, step.reward, step.observation.obs, step.terminated,
                   step.observation.achieved_goal, step.observation.desired_goal};
      if (config.save_buffer && t.achieved_next.size() == 9) {
        BufferGoal g;
        g.env_step = env_steps;
        for (int i = 0; i < 9; ++i) g.achieved[i] = t.achieved_next(i);
        run.record().buffer_goals.push_back(g);
      }
      if (her) {
        episode.push_back(std::move(t));
      } else {
        buffer.add(t);
      }
      if (step.terminated || step.truncated) {
        if (her) {
          for (const auto& r : her_relabel(episode, sc.her_k, *env, her_rng)) buffer.add(r);
          episode.clear();
        }
        current = env->reset();
      } else {
        current = step.observation;
      }

      ++env_steps;
      if (env_steps >= sc.update_after && env_steps % sc.update_every == 0 && buffer.size() >= sc.batch) {
        for (int u = 0; u < sc.update_every; ++u) update();
      }
      run.after_step(agent, env_steps);
    }
  });
}

}  // namespace so3rl::rl
