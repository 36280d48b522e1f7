#include "loop.hpp"

namespace so3rl::rl {

RunRecord td3_train(const TrainConfig& config, const EnvFactory& make_env, MeanTransform transform,
                    const TrainHooks& hooks) {
  const Td3Config& tc = config.td3;
  tc.validate();
  auto env = make_env(derive_seed(config.seed, streams::kTrainEnv));
  Rng init_rng(derive_seed(config.seed, streams::kInit));
  Rng policy_rng(derive_seed(config.seed, streams::kPolicy));
  Rng replay_rng(derive_seed(config.seed, streams::kReplay));
  Rng her_rng(derive_seed(config.seed, streams::kHer));
  const int od = env->obs_dim(), ad = env->action_dim();
  const bool her = config.uses_her() && env->goal_dim() > 0;
  const Real gamma = static_cast<Real>(tc.gamma);
  const Real noise_clip = static_cast<Real>(tc.target_noise_clip);

  Td3Agent agent(od, ad, tc, transform, init_rng);
  grad::Adam<Real> actor_opt(agent.actor_parameters(), tc.lr);
  grad::Adam<Real> critic_opt(agent.critic_parameters(), tc.lr);
  ReplayBuffer buffer(od, ad, tc.buffer_size);
  const long total = config.resolved_steps();
  long updates = 0;

  auto update = [&] {
    const Batch b = buffer.sample(tc.batch, replay_rng);
    RMat y;
    {
      grad::NoGradGuard guard;
      const T next = T::constant(b.next_obs);
      const RMat noise = (grad::standard_normal<Real>(tc.batch, ad, policy_rng) *
                          static_cast<Real>(tc.target_noise_std)).cwiseMax(-noise_clip).cwiseMin(noise_clip);
      const RMat next_action = (agent.act_target(next).value() + noise).cwiseMax(Real(-1)).cwiseMin(Real(1));
      const T na = T::constant(next_action);
      y = clipped_double_q_target(b.reward, b.terminated, agent.q1_target(next, na).value(),
                                  agent.q2_target(next, na).value(), RMat(), Real(0), gamma);
    }
    const T o = T::constant(b.obs);
    const T a = T::constant(b.action);
    const T target = T::constant(y);
    const T critic_loss = grad::mean(grad::square(agent.q1(o, a) - target)) +
                          grad::mean(grad::square(agent.q2(o, a) - target));
    detail::check_finite(critic_loss, "td3 critic loss");
    critic_opt.zero_grad();
    critic_loss.backward();
    critic_opt.step();

    if (++updates % tc.policy_delay == 0) {
      const T actor_loss = -grad::mean(agent.q1(o, agent.act(o)));
      detail::check_finite(actor_loss, "td3 actor loss");
      actor_opt.zero_grad();
      actor_loss.backward();
      actor_opt.step();
      agent.update_targets(static_cast<Real>(tc.tau_polyak));
    }
  };

  detail::Run run(config, make_env, hooks);
  return run.finish(agent, [&](long& env_steps) {
    Observation current = env->reset();
    std::vector<Transition> episode;
    while (env_steps < total) {
      Eigen::VectorXd action;
      if (env_steps < tc.start_steps) {
        action = detail::uniform_action(ad, policy_rng);
      } else {
        action = agent.act_deterministic(current.obs);
        if (tc.expl_noise_std > 0) {
          std::normal_distribution<double> noise(0.0, tc.expl_noise_std);
          for (int i = 0; i < ad; ++i) action(i) = std::clamp(action(i) + noise(policy_rng), -1.0, 1.0);
        }
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
          for (const auto& r : her_relabel(episode, tc.her_k, *env, her_rng)) buffer.add(r);
          episode.clear();
        }
        current = env->reset();
      } else {
        current = step.observation;
      }

      ++env_steps;
      if (env_steps >= tc.update_after && env_steps % tc.update_every == 0 && buffer.size() >= tc.batch) {
        for (int u = 0; u < tc.update_every; ++u) update();
      }
      run.after_step(agent, env_steps);
    }
  });
}

}  // namespace so3rl::rl
