//! Deterministic policy-gradient agent that learns a follower acceleration
//! policy by driving the rollout simulator.

mod agent;
mod buffer;
mod env;
mod train;

use serde::{Deserialize, Serialize};

pub use agent::{critic_loss_grad, soft_update, td_target, update_step, Agent, UpdateLosses};
pub use buffer::{ReplayBuffer, Transition};
pub use env::{CarFollowingEnv, EnvStep};
pub use train::{train_ddpg, DdpgReport, EpisodeRecord};

use crate::error::{Error, Result};
use crate::models::{CFState, Observation};
use crate::neural::{Mlp, OutputActivation, WeightDoc};
use crate::policy::AccelPolicy;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// `−max(ln ε, H)`
    Literal,
    /// `max(−ln ε, H)`
    #[default]
    SurvivalFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DDPGConfig {
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub action_bound_mps2: f64,
    /// Initial exploration noise, decayed linearly to zero over the run.
    pub exploration_sigma: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub penalty: f64,
    pub epsilon_floor: f64,
    pub reward_variant: RewardVariant,
    pub episodes: usize,
    pub seed: u64,
    pub hidden_sizes: Vec<usize>,
    /// Probe-set evaluation period, in episodes.
    pub probe_every: usize,
}

impl Default for DDPGConfig {
    fn default() -> Self {
        DDPGConfig {
            gamma: 0.99,
            tau: 0.005,
            buffer_capacity: 100_000,
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            action_bound_mps2: 3.0,
            exploration_sigma: 0.5,
            h: 1.0,
            penalty: -50.0,
            epsilon_floor: 1e-6,
            reward_variant: RewardVariant::SurvivalFloor,
            episodes: 300,
            seed: 0,
            hidden_sizes: vec![64, 64],
            probe_every: 10,
        }
    }
}

impl DDPGConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.action_bound_mps2 > 0.0) {
            return bad("action_bound_mps2 must be positive");
        }
        if !(self.epsilon_floor > 0.0) {
            return bad("epsilon_floor must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must be at least batch_size > 0");
        }
        if !(self.exploration_sigma >= 0.0) || !self.h.is_finite() || !self.penalty.is_finite() {
            return bad("exploration_sigma, H and penalty must be finite");
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) || self.probe_every == 0 {
            return bad("hidden_sizes must be nonempty and positive, probe_every positive");
        }
        Ok(())
    }
}

/// Per-step reward from the relative spacing error, plus the penalty on collision.
pub fn reward(spacing_sim_m: f64, spacing_obs_m: f64, collided: bool, cfg: &DDPGConfig) -> Result<f64> {
    if !(spacing_obs_m > 0.0) {
        return Err(Error::NonPositiveSpacing(spacing_obs_m));
    }
    let eps = ((spacing_sim_m - spacing_obs_m).abs() / spacing_obs_m).max(cfg.epsilon_floor);
    let base = match cfg.reward_variant {
        RewardVariant::Literal => -eps.ln().max(cfg.h),
        RewardVariant::SurvivalFloor => (-eps.ln()).max(cfg.h),
    };
    Ok(if collided { base + cfg.penalty } else { base })
}

pub const SPACING_SCALE_M: f64 = 100.0;
pub const SPEED_SCALE_MPS: f64 = 40.0;
pub const DV_SCALE_MPS: f64 = 10.0;

pub fn scaled_state(obs: &Observation) -> [f64; 3] {
    [
        obs.spacing_m / SPACING_SCALE_M,
        obs.v_fv_mps / SPEED_SCALE_MPS,
        obs.dv_mps / DV_SCALE_MPS,
    ]
}

/// Trained actor network used as an acceleration policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "WeightDoc", try_from = "WeightDoc")]
pub struct ActorModel {
    pub net: Mlp,
}

impl ActorModel {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.input_size() != 3 || net.output_size() != 1 {
            return Err(Error::ShapeMismatch("actor must map 3 features to 1 action".into()));
        }
        if !matches!(net.output, OutputActivation::ScaledTanh { .. }) {
            return Err(Error::InvalidArgument("actor output must be bounded".into()));
        }
        Ok(ActorModel { net })
    }

    pub fn action_bound(&self) -> f64 {
        match self.net.output {
            OutputActivation::ScaledTanh { scale } => scale,
            OutputActivation::Linear => f64::INFINITY,
        }
    }
}

impl AccelPolicy for ActorModel {
    fn accel(&self, state: &CFState) -> Result<f64> {
        Ok(self.net.forward(&scaled_state(state.current()))?[0])
    }
}

impl From<ActorModel> for WeightDoc {
    fn from(m: ActorModel) -> Self {
        WeightDoc {
            architecture: "actor".into(),
            ..WeightDoc::from(&m.net)
        }
    }
}

impl TryFrom<WeightDoc> for ActorModel {
    type Error = Error;

    fn try_from(mut doc: WeightDoc) -> Result<Self> {
        if doc.architecture != "actor" {
            return Err(Error::Config(format!("weights are for `{}`, expected `actor`", doc.architecture)));
        }
        doc.architecture = "mlp".into();
        ActorModel::new(Mlp::try_from(doc)?)
    }
}
