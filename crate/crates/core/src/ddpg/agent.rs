use rand::Rng;

use super::{ActorModel, DDPGConfig, Transition};
use crate::error::{Error, Result};
use crate::neural::{adam_step, AdamConfig, AdamState, Mlp, OutputActivation, Params};

/// `θ' ← τ·θ + (1 − τ)·θ'` for every parameter.
pub fn soft_update<P: Params + ?Sized>(target: &mut P, online: &P, tau: f64) -> Result<()> {
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch("target and online networks differ".into()));
    }
    for (d, s) in dst.iter_mut().zip(&src) {
        if d.len() != s.len() {
            return Err(Error::ShapeMismatch("target and online tensors differ".into()));
        }
        for (a, b) in d.iter_mut().zip(s.iter()) {
            *a = tau * b + (1.0 - tau) * *a;
        }
    }
    Ok(())
}

/// `y = r + γ·(1 − done)·q_next`
pub fn td_target(reward: f64, gamma: f64, done: bool, q_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// Online and target actor/critic pairs with their optimizer state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    action_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLosses {
    pub critic: f64,
    /// Negated mean Q of the actor's actions.
    pub actor: f64,
}

fn critic_input(state: &[f64; 3], action: f64, bound: f64) -> [f64; 4] {
    [state[0], state[1], state[2], action / bound]
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: &DDPGConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![3];
        sizes.extend(&cfg.hidden_sizes);
        sizes.push(1);
        let actor = Mlp::random(
            &sizes,
            OutputActivation::ScaledTanh {
                scale: cfg.action_bound_mps2,
            },
            rng,
        )?;
        sizes[0] = 4;
        let critic = Mlp::random(&sizes, OutputActivation::Linear, rng)?;
        Ok(Agent {
            actor_opt: AdamState::new(&actor),
            critic_opt: AdamState::new(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            action_bound: cfg.action_bound_mps2,
        })
    }

    pub fn act(&self, state: &[f64; 3]) -> Result<f64> {
        Ok(self.actor.forward(state)?[0])
    }

    pub fn q(&self, state: &[f64; 3], action: f64) -> Result<f64> {
        Ok(self.critic.forward(&critic_input(state, action, self.action_bound))?[0])
    }

    pub fn actor_model(&self) -> Result<ActorModel> {
        ActorModel::new(self.actor.clone())
    }
}

/// Mean squared TD error of `critic` over a batch and its gradient, with
/// targets from the target networks.
pub fn critic_loss_grad(
    critic: &Mlp,
    target_actor: &Mlp,
    target_critic: &Mlp,
    batch: &[Transition],
    cfg: &DDPGConfig,
) -> Result<(f64, Mlp)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let bound = cfg.action_bound_mps2;
    let n = batch.len() as f64;
    let mut grads = critic.zeros_like();
    let mut loss = 0.0;
    for t in batch {
        let q_next = if t.done {
            0.0
        } else {
            let a_next = target_actor.forward(&t.next_state)?[0];
            target_critic.forward(&critic_input(&t.next_state, a_next, bound))?[0]
        };
        let y = td_target(t.reward, cfg.gamma, t.done, q_next);
        let cache = critic.forward_cached(&critic_input(&t.state, t.action, bound))?;
        let r = cache.output()[0] - y;
        loss += r * r;
        critic.backward(&cache, &[2.0 * r / n], &mut grads);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("critic loss {loss}")));
    }
    Ok((loss, grads))
}

/// Gradient of `−mean Q(s, μ(s))` with respect to the actor.
fn actor_loss_grad(actor: &Mlp, critic: &Mlp, batch: &[Transition], bound: f64) -> Result<(f64, Mlp)> {
    let n = batch.len() as f64;
    let mut grads = actor.zeros_like();
    let mut scratch = critic.zeros_like();
    let mut loss = 0.0;
    for t in batch {
        let a_cache = actor.forward_cached(&t.state)?;
        let a = a_cache.output()[0];
        let q_cache = critic.forward_cached(&critic_input(&t.state, a, bound))?;
        loss -= q_cache.output()[0];
        let dq_dx = critic.backward(&q_cache, &[-1.0 / n], &mut scratch);
        actor.backward(&a_cache, &[dq_dx[3] / bound], &mut grads);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("actor loss {loss}")));
    }
    Ok((loss, grads))
}

/// One critic step, one actor step, then soft target updates.
pub fn update_step(agent: &mut Agent, batch: &[Transition], cfg: &DDPGConfig) -> Result<UpdateLosses> {
    let (critic_loss, cg) = critic_loss_grad(&agent.critic, &agent.target_actor, &agent.target_critic, batch, cfg)?;
    adam_step(
        &mut agent.critic,
        &cg,
        &mut agent.critic_opt,
        &AdamConfig::with_learning_rate(cfg.critic_lr),
    )?;
    let (actor_loss, ag) = actor_loss_grad(&agent.actor, &agent.critic, batch, cfg.action_bound_mps2)?;
    adam_step(
        &mut agent.actor,
        &ag,
        &mut agent.actor_opt,
        &AdamConfig::with_learning_rate(cfg.actor_lr),
    )?;
    soft_update(&mut agent.target_critic, &agent.critic, cfg.tau)?;
    soft_update(&mut agent.target_actor, &agent.actor, cfg.tau)?;
    Ok(UpdateLosses {
        critic: critic_loss,
        actor: actor_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::test_support::{check_gradients, numeric_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> DDPGConfig {
        DDPGConfig {
            hidden_sizes: vec![6, 5],
            ..DDPGConfig::default()
        }
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition> {
        (0..n)
            .map(|k| Transition {
                state: [rng.random_range(0.0..0.5), rng.random_range(0.0..0.8), rng.random_range(-0.3..0.3)],
                action: rng.random_range(-3.0..3.0),
                reward: rng.random_range(-2.0..5.0),
                next_state: [rng.random_range(0.0..0.5), rng.random_range(0.0..0.8), rng.random_range(-0.3..0.3)],
                done: k % 3 == 0,
            })
            .collect()
    }

    #[test]
    fn soft_update_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let online = Mlp::random(&[2, 3, 1], OutputActivation::Linear, &mut rng).unwrap();
        let zero = online.zeros_like();

        let mut t = zero.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = zero.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, zero);

        let mut t = zero.clone();
        let mut twos = zero.clone();
        twos.tensors_mut().into_iter().for_each(|x| x.fill(2.0));
        soft_update(&mut t, &twos, 0.1).unwrap();
        assert!(t.tensors().iter().all(|x| x.iter().all(|v| (v - 0.2).abs() < 1e-15)));
    }

    #[test]
    fn bootstrap_target() {
        assert!((td_target(1.0, 0.99, false, 2.0) - 2.98).abs() < 1e-12);
        assert_eq!(td_target(1.0, 0.99, true, 2.0), 1.0);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let agent = Agent::new(&cfg, &mut rng).unwrap();
        let b = batch(&mut rng, 9);
        let (_, analytic) = critic_loss_grad(&agent.critic, &agent.target_actor, &agent.target_critic, &b, &cfg).unwrap();
        let numeric = numeric_grad(&agent.critic, 1e-5, |c| {
            critic_loss_grad(c, &agent.target_actor, &agent.target_critic, &b, &cfg)
                .unwrap()
                .0
        });
        check_gradients(&analytic, &numeric, 1e-4);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let agent = Agent::new(&cfg, &mut rng).unwrap();
        let b = batch(&mut rng, 7);
        let (_, analytic) = actor_loss_grad(&agent.actor, &agent.critic, &b, 3.0).unwrap();
        let numeric = numeric_grad(&agent.actor, 1e-5, |a| actor_loss_grad(a, &agent.critic, &b, 3.0).unwrap().0);
        check_gradients(&analytic, &numeric, 1e-4);
    }

    #[test]
    fn update_moves_towards_targets() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut agent = Agent::new(&cfg, &mut rng).unwrap();
        let b = batch(&mut rng, 32);
        let first = update_step(&mut agent, &b, &cfg).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = update_step(&mut agent, &b, &cfg).unwrap();
        }
        assert!(last.critic < first.critic);
        assert_ne!(agent.target_actor, agent.actor);
    }

    #[test]
    fn actor_output_is_bounded() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut agent = Agent::new(&cfg, &mut rng).unwrap();
        agent.actor.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v *= 50.0));
        for s in [[10.0, 10.0, 10.0], [-10.0, 0.0, -10.0]] {
            assert!(agent.act(&s).unwrap().abs() <= 3.0);
        }
    }
}
