//! Closed-form car-following laws: GHR stimulus–response and the
//! Intelligent Driver Model, plus the state they read.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a follower perceives at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub spacing_m: f64,
    pub v_fv_mps: f64,
    /// `v_fv - v_lv`; positive while closing in.
    pub dv_mps: f64,
    pub v_lv_mps: f64,
}

impl Observation {
    pub fn new(spacing_m: f64, v_fv_mps: f64, v_lv_mps: f64) -> Self {
        Observation {
            spacing_m,
            v_fv_mps,
            dv_mps: v_fv_mps - v_lv_mps,
            v_lv_mps,
        }
    }
}

/// Current observation plus a bounded history, newest last.
#[derive(Debug, Clone, PartialEq)]
pub struct CFState {
    dt_s: f64,
    step: usize,
    depth: usize,
    history: VecDeque<Observation>,
}

impl CFState {
    /// State at step 0 whose `depth` earlier entries repeat `initial`.
    pub fn seeded(dt_s: f64, depth: usize, initial: Observation) -> Self {
        CFState {
            dt_s,
            step: 0,
            depth,
            history: std::iter::repeat_n(initial, depth + 1).collect(),
        }
    }

    /// State built from an explicit history, oldest first; the last entry is current.
    pub fn from_history(dt_s: f64, history: Vec<Observation>) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::Empty("state history"));
        }
        Ok(CFState {
            dt_s,
            step: 0,
            depth: history.len() - 1,
            history: history.into(),
        })
    }

    pub fn push(&mut self, obs: Observation) {
        self.history.push_back(obs);
        while self.history.len() > self.depth + 1 {
            self.history.pop_front();
        }
        self.step += 1;
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    /// Steps advanced since construction.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Number of past steps retained besides the current one.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn current(&self) -> &Observation {
        self.history.back().expect("history is never empty")
    }

    /// Observation `lag` steps back (0 = current).
    pub fn lagged(&self, lag: usize) -> Option<&Observation> {
        let n = self.history.len();
        (lag < n).then(|| &self.history[n - 1 - lag])
    }

    /// The newest `len` observations, oldest first.
    pub fn window(&self, len: usize) -> Option<impl Iterator<Item = &Observation>> {
        let n = self.history.len();
        (len <= n).then(|| self.history.range(n - len..))
    }

    pub fn spacing(&self) -> f64 {
        self.current().spacing_m
    }

    pub fn v_fv(&self) -> f64 {
        self.current().v_fv_mps
    }

    pub fn dv(&self) -> f64 {
        self.current().dv_mps
    }

    pub fn v_lv(&self) -> f64 {
        self.current().v_lv_mps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhrParams {
    pub c: f64,
    pub m_exp: f64,
    pub l_exp: f64,
    pub reaction_time_s: f64,
}

impl GhrParams {
    pub fn validate(&self, dt_s: f64) -> Result<()> {
        if ![self.c, self.m_exp, self.l_exp, self.reaction_time_s].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite GHR parameter in {self:?}")));
        }
        if self.reaction_time_s < 0.0 {
            return Err(Error::InvalidParams(format!("reaction time {} s", self.reaction_time_s)));
        }
        let steps = self.reaction_time_s / dt_s;
        if (steps - steps.round()).abs() * dt_s > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "reaction time {} s is not a multiple of dt {dt_s} s",
                self.reaction_time_s
            )));
        }
        Ok(())
    }

    pub fn lag_steps(&self, dt_s: f64) -> usize {
        (self.reaction_time_s / dt_s).round().max(0.0) as usize
    }

    /// Copy with the reaction time snapped to the nearest whole step.
    pub fn quantized(mut self, dt_s: f64) -> Self {
        self.reaction_time_s = self.lag_steps(dt_s) as f64 * dt_s;
        self
    }
}

/// Orientation of the GHR speed difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StimulusSign {
    /// `v_lv - v_fv`: a leader pulling away accelerates the follower.
    #[default]
    LeaderMinusFollower,
    /// `v_fv - v_lv`, the follower-minus-leader reading.
    FollowerMinusLeader,
}

/// Follower speeds below this are raised to it when the speed exponent is negative.
const GHR_MIN_SPEED_MPS: f64 = 1e-3;

/// `a = c · v(t)^m · stimulus(t−T) / spacing(t−T)^l`.
pub fn ghr_accel(params: &GhrParams, state: &CFState, sign: StimulusSign) -> Result<f64> {
    let lag = params.lag_steps(state.dt_s());
    let delayed = state.lagged(lag).ok_or(Error::InsufficientHistory {
        needed: lag + 1,
        available: state.depth() + 1,
    })?;
    if delayed.spacing_m <= 0.0 {
        return Err(Error::NonPositiveSpacing(delayed.spacing_m));
    }
    let v = state.v_fv().max(0.0);
    let v = if params.m_exp < 0.0 { v.max(GHR_MIN_SPEED_MPS) } else { v };
    let stimulus = match sign {
        StimulusSign::LeaderMinusFollower => -delayed.dv_mps,
        StimulusSign::FollowerMinusLeader => delayed.dv_mps,
    };
    let a = params.c * v.powf(params.m_exp) * stimulus / delayed.spacing_m.powf(params.l_exp);
    if !a.is_finite() {
        return Err(Error::InvalidParams(format!("GHR produced non-finite acceleration with {params:?}")));
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    #[serde(rename = "a0_mps2")]
    pub a0: f64,
    #[serde(rename = "b_mps2")]
    pub b: f64,
    #[serde(rename = "v_des_mps")]
    pub v_des: f64,
    #[serde(rename = "t_des_s")]
    pub t_des: f64,
    #[serde(rename = "s0_m")]
    pub s0: f64,
    pub lambda: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            a0: 1.0,
            b: 1.5,
            v_des: 30.0,
            t_des: 1.5,
            s0: 2.0,
            lambda: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.a0, self.b, self.v_des, self.t_des, self.s0];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParams(format!("IDM parameters must be positive: {self:?}")));
        }
        if !(self.lambda >= 1.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!("IDM exponent {} < 1", self.lambda)));
        }
        Ok(())
    }

    /// Desired gap at speed `v` and relative speed `dv`.
    pub fn desired_gap(&self, v: f64, dv: f64, literal_eq5: bool) -> f64 {
        let dynamic = v * self.t_des + v * dv / (2.0 * (self.a0 * self.b).sqrt());
        self.s0 + if literal_eq5 { dynamic } else { dynamic.max(0.0) }
    }

    /// Steady-state gap at speed `v` behind a leader of the same speed.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        let free = 1.0 - (v / self.v_des).powf(self.lambda);
        if free <= 0.0 {
            return f64::INFINITY;
        }
        (self.s0 + v * self.t_des) / free.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmOptions {
    /// Evaluate the desired gap without flooring its dynamic part at zero.
    pub literal_eq5: bool,
    /// Lower clip on the returned acceleration; the upper clip is `a0`.
    pub min_accel_mps2: f64,
}

impl Default for IdmOptions {
    fn default() -> Self {
        IdmOptions {
            literal_eq5: false,
            min_accel_mps2: -8.0,
        }
    }
}

/// `a = a0 [1 − (v/v_des)^λ − (S̃/s)²]`, clipped to `[min_accel, a0]`.
pub fn idm_accel(params: &IdmParams, state: &CFState, opts: &IdmOptions) -> Result<f64> {
    let s = state.spacing();
    if s <= 0.0 {
        return Err(Error::NonPositiveSpacing(s));
    }
    let v = state.v_fv();
    let gap = params.desired_gap(v, state.dv(), opts.literal_eq5);
    let a = params.a0 * (1.0 - (v / params.v_des).powf(params.lambda) - (gap / s).powi(2));
    Ok(a.clamp(opts.min_accel_mps2, params.a0))
}
