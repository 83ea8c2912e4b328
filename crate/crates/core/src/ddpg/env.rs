use super::{reward, scaled_state, DDPGConfig};
use crate::error::{Error, Result};
use crate::events::CarFollowingEvent;
use crate::sim::FollowerSim;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub next_state: [f64; 3],
    pub reward: f64,
    pub done: bool,
    pub collided: bool,
    pub spacing_m: f64,
}

/// One event as an episode: the leader replays its observed speeds while the
/// agent picks the follower's acceleration.
pub struct CarFollowingEnv<'a> {
    event: &'a CarFollowingEvent,
    sim: FollowerSim,
    cfg: &'a DDPGConfig,
}

impl<'a> CarFollowingEnv<'a> {
    pub fn new(event: &'a CarFollowingEvent, cfg: &'a DDPGConfig) -> Result<Self> {
        Ok(CarFollowingEnv {
            event,
            sim: FollowerSim::for_event(event, 0)?,
            cfg,
        })
    }

    pub fn state(&self) -> [f64; 3] {
        scaled_state(self.sim.state().current())
    }

    pub fn is_done(&self) -> bool {
        self.sim.is_done()
    }

    pub fn sim(&self) -> &FollowerSim {
        &self.sim
    }

    /// Applies `action`, clipped to the configured bound.
    pub fn step(&mut self, action: f64) -> Result<EnvStep> {
        if self.sim.is_done() {
            return Err(Error::TerminalEnv);
        }
        let bound = self.cfg.action_bound_mps2;
        let out = self.sim.advance(action.clamp(-bound, bound))?;
        let observed = self.event.spacing()[out.step];
        let r = reward(out.spacing_m, observed, out.collided, self.cfg)?;
        Ok(EnvStep {
            next_state: self.state(),
            reward: r,
            done: out.done,
            collided: out.collided,
            spacing_m: out.spacing_m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::test_support::constant_event;
    use crate::policy::ConstantPolicy;
    use crate::sim::rollout;

    #[test]
    fn collision_ends_episode_with_penalty() {
        let e = constant_event("e", 2.0, 10.0, 200);
        let cfg = DDPGConfig::default();
        let mut env = CarFollowingEnv::new(&e, &cfg).unwrap();
        let mut last = None;
        while !env.is_done() {
            last = Some(env.step(3.0).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done && last.collided);
        // Spacing at or below zero means a relative error of at least 1.
        assert!((last.reward - (cfg.h + cfg.penalty)).abs() < 1e-9);
        assert!(matches!(env.step(0.0), Err(Error::TerminalEnv)));
    }

    #[test]
    fn full_event_ends_without_penalty() {
        let e = constant_event("e", 20.0, 10.0, 151);
        let cfg = DDPGConfig::default();
        let mut env = CarFollowingEnv::new(&e, &cfg).unwrap();
        let first = env.step(0.0).unwrap();
        assert!(!first.done);
        let mut steps = 1;
        let mut out = first;
        while !env.is_done() {
            out = env.step(0.0).unwrap();
            steps += 1;
        }
        assert_eq!(steps, 150);
        assert!(out.done && !out.collided);
        assert!(out.reward >= cfg.h);
    }

    #[test]
    fn matches_rollout_for_same_actions() {
        let e = constant_event("e", 15.0, 10.0, 160);
        let cfg = DDPGConfig::default();
        let mut env = CarFollowingEnv::new(&e, &cfg).unwrap();
        let r = rollout(&ConstantPolicy::new(0.4), &e).unwrap();
        let mut spacing = vec![env.sim().spacing()];
        while !env.is_done() {
            spacing.push(env.step(0.4).unwrap().spacing_m);
        }
        assert_eq!(spacing, r.spacing_sim_m);
    }
}
