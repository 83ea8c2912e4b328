//! Closed-loop rollout of a follower policy against a replayed leader.
//!
//! The leader moves open-loop along its observed speed profile; its position
//! is the trapezoidal integral of that profile. The follower is advanced with
//! a ballistic update and cannot reverse.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::CarFollowingEvent;
use crate::models::{CFState, Observation};
use crate::policy::AccelPolicy;

/// Advances position and speed by one step of constant acceleration.
///
/// If the speed would turn negative inside the step, the vehicle stops at
/// the instant its speed reaches zero and stays there.
pub fn ballistic_step(x: f64, v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v_next = v + a * dt;
    if v_next < 0.0 {
        (x - v * v / (2.0 * a), 0.0)
    } else {
        (x + v * dt + 0.5 * a * dt * dt, v_next)
    }
}

/// Leader positions from speeds by trapezoidal integration.
pub fn integrate_trapezoid(x0: f64, speeds: &[f64], dt: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(speeds.len());
    let mut pos = x0;
    for (k, v) in speeds.iter().enumerate() {
        if k > 0 {
            pos += 0.5 * (speeds[k - 1] + v) * dt;
        }
        x.push(pos);
    }
    x
}

/// Outcome of one [`FollowerSim::advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    pub spacing_m: f64,
    pub v_fv_mps: f64,
    pub collided: bool,
    pub done: bool,
}

/// Step-by-step follower simulation against a scripted leader.
///
/// Both [`rollout`] and the reinforcement-learning environment drive this
/// same integrator.
#[derive(Debug, Clone)]
pub struct FollowerSim {
    dt_s: f64,
    v_lv: Vec<f64>,
    x_lv: Vec<f64>,
    x_fv: f64,
    v_fv: f64,
    step: usize,
    state: CFState,
    collided: bool,
}

impl FollowerSim {
    /// Follower starts at position 0 with `v_fv0`; leader rear starts at `spacing0`.
    pub fn new(v_lv: &[f64], spacing0: f64, v_fv0: f64, dt_s: f64, history_depth: usize) -> Result<Self> {
        if v_lv.len() < 2 {
            return Err(Error::InvalidArgument("leader profile needs at least 2 samples".into()));
        }
        if spacing0 <= 0.0 {
            return Err(Error::NonPositiveSpacing(spacing0));
        }
        let x_lv = integrate_trapezoid(spacing0, v_lv, dt_s);
        let obs = Observation::new(spacing0, v_fv0, v_lv[0]);
        Ok(FollowerSim {
            dt_s,
            v_lv: v_lv.to_vec(),
            x_lv,
            x_fv: 0.0,
            v_fv: v_fv0,
            step: 0,
            state: CFState::seeded(dt_s, history_depth, obs),
            collided: false,
        })
    }

    /// Simulation initialized from an event's first observed step.
    pub fn for_event(event: &CarFollowingEvent, history_depth: usize) -> Result<Self> {
        Self::new(event.v_lv(), event.spacing()[0], event.v_fv()[0], event.dt_s, history_depth)
    }

    pub fn state(&self) -> &CFState {
        &self.state
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.v_lv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_lv.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.x_lv[self.step] - self.x_fv
    }

    pub fn v_fv(&self) -> f64 {
        self.v_fv
    }

    pub fn collided(&self) -> bool {
        self.collided
    }

    pub fn is_done(&self) -> bool {
        self.collided || self.step + 1 >= self.v_lv.len()
    }

    pub fn advance(&mut self, accel: f64) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::TerminalEnv);
        }
        if !accel.is_finite() {
            return Err(Error::NonFiniteAccel { step: self.step });
        }
        let (x, v) = ballistic_step(self.x_fv, self.v_fv, accel, self.dt_s);
        self.x_fv = x;
        self.v_fv = v;
        self.step += 1;
        let spacing = self.spacing();
        self.collided = spacing <= 0.0;
        self.state.push(Observation::new(spacing, v, self.v_lv[self.step]));
        Ok(StepOutcome {
            step: self.step,
            spacing_m: spacing,
            v_fv_mps: v,
            collided: self.collided,
            done: self.is_done(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutResult {
    /// Simulated spacing per completed step, starting with the observed initial gap.
    pub spacing_sim_m: Vec<f64>,
    pub v_sim_mps: Vec<f64>,
    /// Acceleration applied from each step to the next; the terminal step holds 0.
    pub a_sim_mps2: Vec<f64>,
    pub collided: bool,
    pub collision_step: Option<usize>,
    pub steps_completed: usize,
}

impl RolloutResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_index", "spacing_sim_m", "v_sim_mps", "a_sim_mps2"])?;
        for k in 0..self.steps_completed {
            w.write_record([
                k.to_string(),
                self.spacing_sim_m[k].to_string(),
                self.v_sim_mps[k].to_string(),
                self.a_sim_mps2[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<rollout csv>", e))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Simulates the follower under `policy` for the length of `event`, stopping
/// early on collision (spacing ≤ 0).
pub fn rollout(policy: &dyn AccelPolicy, event: &CarFollowingEvent) -> Result<RolloutResult> {
    let bound = policy.bind(event);
    let policy: &dyn AccelPolicy = bound.as_deref().unwrap_or(policy);
    let mut sim = FollowerSim::for_event(event, policy.history_depth())?;

    let n = event.len();
    let mut spacing = Vec::with_capacity(n);
    let mut speed = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    spacing.push(sim.spacing());
    speed.push(sim.v_fv());

    while !sim.is_done() {
        let step = sim.step();
        let a = policy.accel(sim.state())?;
        if !a.is_finite() {
            return Err(Error::NonFiniteAccel { step });
        }
        let out = sim.advance(a)?;
        accel.push(a);
        spacing.push(out.spacing_m);
        speed.push(out.v_fv_mps);
    }
    accel.push(0.0);

    let collided = sim.collided();
    Ok(RolloutResult {
        steps_completed: spacing.len(),
        collision_step: collided.then(|| spacing.len() - 1),
        spacing_sim_m: spacing,
        v_sim_mps: speed,
        a_sim_mps2: accel,
        collided,
    })
}

/// `a*(t) = (v(t+1) − v(t)) / dt` over a speed series.
pub fn accel_targets_from_speeds(speeds: &[f64], dt_s: f64) -> Vec<f64> {
    speeds.windows(2).map(|w| (w[1] - w[0]) / dt_s).collect()
}

/// Finite-difference follower accelerations of an event, length `L − 1`.
pub fn derived_accel_targets(event: &CarFollowingEvent) -> Vec<f64> {
    accel_targets_from_speeds(event.v_fv(), event.dt_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::test_support::constant_event;
    use crate::policy::{ConstantPolicy, ReplayOracle};

    #[test]
    fn zero_policy_co_moving() {
        let ev = constant_event("c", 25.0, 12.0, 201);
        let r = rollout(&ConstantPolicy::new(0.0), &ev).unwrap();
        assert_eq!(r.steps_completed, 201);
        assert!(!r.collided);
        for s in &r.spacing_sim_m {
            assert!((s - 25.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_ballistic_step() {
        let (x, v) = ballistic_step(0.0, 10.0, 1.0, 0.1);
        assert!((v - 10.1).abs() < 1e-12);
        assert!((x - 1.005).abs() < 1e-12);
        let ev = constant_event("c", 25.0, 10.0, 151);
        let r = rollout(&ConstantPolicy::new(1.0), &ev).unwrap();
        assert!((r.spacing_sim_m[1] - (25.0 - 0.005)).abs() < 1e-9);
        assert!((r.v_sim_mps[1] - 10.1).abs() < 1e-12);
    }

    #[test]
    fn hard_acceleration_collides() {
        let ev = constant_event("tight", 1.0, 10.0, 151);
        let r = rollout(&ConstantPolicy::new(5.0), &ev).unwrap();
        assert!(r.collided);
        // 0.5 · 5 · t² reaches 1 m at t ≈ 0.632 s, i.e. during step 7.
        assert_eq!(r.collision_step, Some(7));
        assert!(r.steps_completed < ev.len());
        assert!(r.spacing_sim_m[7] <= 0.0);
        assert!(r.spacing_sim_m[..7].iter().all(|s| *s > 0.0));
        assert_eq!(r.spacing_sim_m.len(), r.steps_completed);
        assert_eq!(r.a_sim_mps2.len(), r.steps_completed);
    }

    #[test]
    fn speed_never_negative() {
        let ev = constant_event("c", 30.0, 3.0, 151);
        let r = rollout(&ConstantPolicy::new(-8.0), &ev).unwrap();
        assert!(r.v_sim_mps.iter().all(|v| *v >= 0.0));
        // Stops after 3/8 s, covering 9/16 m.
        let last = *r.spacing_sim_m.last().unwrap();
        assert!((last - (30.0 + 3.0 * 15.0 - 9.0 / 16.0)).abs() < 1e-9);
    }

    #[test]
    fn derived_targets() {
        let ev = constant_event("c", 25.0, 12.0, 151);
        assert!(derived_accel_targets(&ev).iter().all(|a| *a == 0.0));
        assert_eq!(derived_accel_targets(&ev).len(), 150);
        let a = accel_targets_from_speeds(&[10.0, 10.1], 0.1);
        assert_eq!(a.len(), 1);
        assert!((a[0] - 1.0).abs() < 1e-9);
        let ramp: Vec<f64> = (0..50).map(|k| 2.0 * k as f64 * 0.1).collect();
        for a in accel_targets_from_speeds(&ramp, 0.1) {
            assert!((a - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn replay_reproduces_trapezoid_consistent_event() {
        let n = 201;
        let dt = 0.1;
        let v_lv: Vec<f64> = (0..n).map(|k| 15.0 + 2.0 * (k as f64 * 0.05).sin()).collect();
        let v_fv: Vec<f64> = (0..n).map(|k| 15.0 + 1.5 * (k as f64 * 0.05 - 0.3).sin()).collect();
        let x_lv = integrate_trapezoid(30.0, &v_lv, dt);
        let x_fv = integrate_trapezoid(0.0, &v_fv, dt);
        let spacing: Vec<f64> = x_lv.iter().zip(&x_fv).map(|(l, f)| l - f).collect();
        let ev = CarFollowingEvent::new("r", dt, spacing.clone(), v_fv, v_lv).unwrap();
        let r = rollout(&ReplayOracle, &ev).unwrap();
        for (a, b) in r.spacing_sim_m.iter().zip(&spacing) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let ev = constant_event("c", 10.0, 8.0, 151);
        let p = ConstantPolicy::new(0.3);
        assert_eq!(rollout(&p, &ev).unwrap(), rollout(&p, &ev).unwrap());
    }

    struct Nan;
    impl AccelPolicy for Nan {
        fn accel(&self, _: &CFState) -> Result<f64> {
            Ok(f64::NAN)
        }
    }

    #[test]
    fn non_finite_policy_aborts() {
        let ev = constant_event("c", 10.0, 8.0, 151);
        assert!(matches!(rollout(&Nan, &ev), Err(Error::NonFiniteAccel { step: 0 })));
    }

    #[test]
    fn stepping_past_the_end_fails() {
        let mut sim = FollowerSim::new(&[10.0, 10.0], 5.0, 10.0, 0.1, 0).unwrap();
        assert!(sim.advance(0.0).unwrap().done);
        assert!(matches!(sim.advance(0.0), Err(Error::TerminalEnv)));
    }

    #[test]
    fn csv_dump_has_one_row_per_step() {
        let ev = constant_event("c", 10.0, 8.0, 151);
        let r = rollout(&ConstantPolicy::new(0.0), &ev).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_index,spacing_sim_m,v_sim_mps,a_sim_mps2\n"));
        assert_eq!(text.lines().count(), 152);
    }
}
