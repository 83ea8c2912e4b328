//! The acceleration-policy contract shared by every model family, and the
//! serializable [`ModelHandle`] that wraps a fitted model of any family.

use serde::{Deserialize, Serialize};

use crate::ddpg::ActorModel;
use crate::error::{Error, Result};
use crate::events::CarFollowingEvent;
use crate::models::{ghr_accel, idm_accel, CFState, GhrParams, IdmOptions, IdmParams, StimulusSign};
use crate::neural::{MlpModel, RecurrentModel};
use crate::sim::derived_accel_targets;

/// Anything that maps a car-following state to a follower acceleration.
pub trait AccelPolicy: Send + Sync {
    fn accel(&self, state: &CFState) -> Result<f64>;

    /// Past steps the policy reads besides the current one.
    fn history_depth(&self) -> usize {
        0
    }

    /// Event-specific specialization, for policies that need to see the
    /// event before rolling it out.
    fn bind<'a>(&'a self, _event: &CarFollowingEvent) -> Option<Box<dyn AccelPolicy + 'a>> {
        None
    }
}

/// Fixed acceleration regardless of state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPolicy {
    pub accel_mps2: f64,
}

impl ConstantPolicy {
    pub fn new(accel_mps2: f64) -> Self {
        ConstantPolicy { accel_mps2 }
    }
}

impl AccelPolicy for ConstantPolicy {
    fn accel(&self, _state: &CFState) -> Result<f64> {
        Ok(self.accel_mps2)
    }
}

/// Replays the finite-difference accelerations of each event's observed
/// follower speed. Rolling it out reproduces the observed trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayOracle;

struct ReplayTrack {
    targets: Vec<f64>,
}

impl AccelPolicy for ReplayTrack {
    fn accel(&self, state: &CFState) -> Result<f64> {
        Ok(self.targets.get(state.step()).copied().unwrap_or(0.0))
    }
}

impl AccelPolicy for ReplayOracle {
    fn accel(&self, _state: &CFState) -> Result<f64> {
        Err(Error::InvalidArgument("the replay oracle must be bound to an event".into()))
    }

    fn bind<'a>(&'a self, event: &CarFollowingEvent) -> Option<Box<dyn AccelPolicy + 'a>> {
        Some(Box::new(ReplayTrack {
            targets: derived_accel_targets(event),
        }))
    }
}

/// Clip applied to a classic model's output, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelClip {
    pub min_mps2: f64,
    pub max_mps2: f64,
}

impl Default for AccelClip {
    fn default() -> Self {
        AccelClip {
            min_mps2: -8.0,
            max_mps2: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhrModel {
    pub params: GhrParams,
    #[serde(default)]
    pub sign: StimulusSign,
    #[serde(default)]
    pub clip: AccelClip,
    pub dt_s: f64,
}

impl GhrModel {
    pub fn new(params: GhrParams, dt_s: f64) -> Result<Self> {
        params.validate(dt_s)?;
        Ok(GhrModel {
            params,
            sign: StimulusSign::default(),
            clip: AccelClip::default(),
            dt_s,
        })
    }
}

impl AccelPolicy for GhrModel {
    fn accel(&self, state: &CFState) -> Result<f64> {
        let a = ghr_accel(&self.params, state, self.sign)?;
        Ok(a.clamp(self.clip.min_mps2, self.clip.max_mps2))
    }

    fn history_depth(&self) -> usize {
        self.params.lag_steps(self.dt_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmModel {
    pub params: IdmParams,
    #[serde(default)]
    pub options: IdmOptions,
}

impl IdmModel {
    pub fn new(params: IdmParams) -> Result<Self> {
        params.validate()?;
        Ok(IdmModel {
            params,
            options: IdmOptions::default(),
        })
    }
}

impl AccelPolicy for IdmModel {
    fn accel(&self, state: &CFState) -> Result<f64> {
        idm_accel(&self.params, state, &self.options)
    }
}

/// A fitted model of any family behind one acceleration contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelHandle {
    Ghr(GhrModel),
    Idm(IdmModel),
    Mlp(MlpModel),
    Recurrent(RecurrentModel),
    Actor(ActorModel),
    Constant(ConstantPolicy),
    Replay,
}

impl ModelHandle {
    fn as_policy(&self) -> &dyn AccelPolicy {
        match self {
            ModelHandle::Ghr(m) => m,
            ModelHandle::Idm(m) => m,
            ModelHandle::Mlp(m) => m,
            ModelHandle::Recurrent(m) => m,
            ModelHandle::Actor(m) => m,
            ModelHandle::Constant(m) => m,
            ModelHandle::Replay => &ReplayOracle,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ModelHandle::Ghr(_) => "ghr",
            ModelHandle::Idm(_) => "idm",
            ModelHandle::Mlp(_) => "mlp",
            ModelHandle::Recurrent(_) => "recurrent",
            ModelHandle::Actor(_) => "actor",
            ModelHandle::Constant(_) => "constant",
            ModelHandle::Replay => "replay",
        }
    }
}

impl AccelPolicy for ModelHandle {
    fn accel(&self, state: &CFState) -> Result<f64> {
        self.as_policy().accel(state)
    }

    fn history_depth(&self) -> usize {
        self.as_policy().history_depth()
    }

    fn bind<'a>(&'a self, event: &CarFollowingEvent) -> Option<Box<dyn AccelPolicy + 'a>> {
        self.as_policy().bind(event)
    }
}
