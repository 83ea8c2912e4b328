use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{update_step, Agent, CarFollowingEnv, DDPGConfig, ReplayBuffer, Transition};
use crate::bench::rollout_mse;
use crate::error::{Error, Result};
use crate::events::CarFollowingEvent;
use crate::policy::ModelHandle;
use crate::sim::rollout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub collided: bool,
    /// Mean spacing MSE of the greedy actor on the probe set, when evaluated.
    pub probe_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DdpgReport {
    pub episodes: Vec<EpisodeRecord>,
}

impl DdpgReport {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.episode_return).collect()
    }

    pub fn final_probe_mse(&self) -> Option<f64> {
        self.episodes.iter().rev().find_map(|e| e.probe_mse)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["episode", "return", "collided", "probe_mse"])?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.episode_return.to_string(),
                u8::from(e.collided).to_string(),
                e.probe_mse.map(|m| m.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

fn probe_mse(agent: &Agent, probe: &[CarFollowingEvent]) -> Result<f64> {
    let actor = agent.actor_model()?;
    let mut total = 0.0;
    for e in probe {
        let r = rollout(&actor, e)?;
        total += rollout_mse(&r, e)?;
    }
    Ok(total / probe.len() as f64)
}

/// Trains an actor on `train_events`, one event per episode, and scores the
/// greedy actor on `probe_events` every `probe_every` episodes and at the end.
pub fn train_ddpg(
    train_events: &[CarFollowingEvent],
    probe_events: &[CarFollowingEvent],
    cfg: &DDPGConfig,
) -> Result<(ModelHandle, DdpgReport)> {
    cfg.validate()?;
    if train_events.is_empty() || probe_events.is_empty() {
        return Err(Error::Empty("training or probe events"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(cfg, &mut rng)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut order: Vec<usize> = (0..train_events.len()).collect();
    let mut report = DdpgReport::default();

    for episode in 0..cfg.episodes {
        if episode % order.len() == 0 {
            order.shuffle(&mut rng);
        }
        let event = &train_events[order[episode % order.len()]];
        let sigma = cfg.exploration_sigma * (1.0 - episode as f64 / cfg.episodes as f64);
        let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;

        let mut env = CarFollowingEnv::new(event, cfg)?;
        let mut state = env.state();
        let mut ret = 0.0;
        let mut collided = false;
        while !env.is_done() {
            let bound = cfg.action_bound_mps2;
            let action = (agent.act(&state)? + noise.sample(&mut rng)).clamp(-bound, bound);
            let step = env.step(action)?;
            buffer.push(Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.next_state,
                done: step.done,
            });
            ret += step.reward;
            collided |= step.collided;
            state = step.next_state;
            if buffer.len() >= cfg.batch_size {
                let batch = buffer.sample(cfg.batch_size, &mut rng)?;
                update_step(&mut agent, &batch, cfg)
                    .map_err(|e| Error::Diverged(format!("episode {episode}: {e}")))?;
            }
        }
        let probe = if (episode + 1) % cfg.probe_every == 0 || episode + 1 == cfg.episodes {
            Some(probe_mse(&agent, probe_events)?)
        } else {
            None
        };
        log::debug!("episode {episode}: return {ret:.2} collided {collided} probe {probe:?}");
        report.episodes.push(EpisodeRecord {
            episode,
            episode_return: ret,
            collided,
            probe_mse: probe,
        });
    }
    Ok((ModelHandle::Actor(agent.actor_model()?), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize_set, FollowerInit, LeaderProfile, SynthSetSpec};

    fn events(n: usize, seed: u64) -> Vec<CarFollowingEvent> {
        let set = SynthSetSpec {
            init: FollowerInit::Offset {
                speed_offset_mps: -3.0,
                gap_factor: 1.0,
            },
            duration_s: 15.0,
            ..SynthSetSpec::new(LeaderProfile::Constant { speed_mps: 15.0 }, n, seed)
        };
        synthesize_set(&set).unwrap()
    }

    #[test]
    fn short_run_is_seed_deterministic() {
        let cfg = DDPGConfig {
            episodes: 4,
            hidden_sizes: vec![16, 16],
            probe_every: 2,
            batch_size: 32,
            seed: 5,
            ..DDPGConfig::default()
        };
        let (train, probe) = (events(3, 1), events(2, 2));
        let (a, ra) = train_ddpg(&train, &probe, &cfg).unwrap();
        let (b, rb) = train_ddpg(&train, &probe, &cfg).unwrap();
        assert_eq!(ra.returns(), rb.returns());
        assert_eq!(a, b);
        assert_eq!(ra.episodes.len(), 4);
        assert!(ra.episodes[1].probe_mse.is_some() && ra.episodes[0].probe_mse.is_none());
        let mut csv = Vec::new();
        ra.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn empty_sets_rejected() {
        assert!(train_ddpg(&[], &events(1, 1), &DDPGConfig::default()).is_err());
    }
}
