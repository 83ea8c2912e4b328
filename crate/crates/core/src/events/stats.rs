use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CarFollowingEvent;
use crate::error::{Error, Result};

/// Steps with follower speed below this are left out of the time-gap measure.
pub const TIME_GAP_MIN_SPEED_MPS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Bins are `[e_i, e_{i+1})` except the last, which also includes its right edge.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("histogram edges must be strictly increasing (>= 2 edges)".into()));
    }
    let mut h = Histogram {
        edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        underflow: 0,
        overflow: 0,
    };
    let last = *edges.last().unwrap();
    for &v in values {
        if v < edges[0] {
            h.underflow += 1;
        } else if v > last || v.is_nan() {
            h.overflow += 1;
        } else if v == last {
            *h.counts.last_mut().unwrap() += 1;
        } else {
            let bin = edges.partition_point(|e| *e <= v) - 1;
            h.counts[bin] += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Moments {
        if values.is_empty() {
            return Moments {
                count: 0,
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Moments {
            count: values.len() as u64,
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureStats {
    pub unit: String,
    pub summary: Moments,
    pub histogram: Histogram,
}

/// The six behavioral measures, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_events: usize,
    pub measures: BTreeMap<String, MeasureStats>,
}

pub const SPACE_GAP: &str = "space_gap_m";
pub const FOLLOWING_SPEED: &str = "following_speed_mps";
pub const TIME_GAP: &str = "time_gap_s";
pub const ABS_RELATIVE_SPEED: &str = "abs_relative_speed_mps";
pub const ABS_ACCELERATION: &str = "abs_acceleration_mps2";
pub const DURATION: &str = "duration_s";

fn uniform_edges(hi: f64, step: f64) -> Vec<f64> {
    let n = (hi / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// (name, unit, bin edges) for every measure.
fn measure_layout() -> [(&'static str, &'static str, Vec<f64>); 6] {
    [
        (SPACE_GAP, "m", uniform_edges(150.0, 5.0)),
        (FOLLOWING_SPEED, "m/s", uniform_edges(40.0, 1.0)),
        (TIME_GAP, "s", uniform_edges(10.0, 0.25)),
        (ABS_RELATIVE_SPEED, "m/s", uniform_edges(10.0, 0.25)),
        (ABS_ACCELERATION, "m/s^2", uniform_edges(5.0, 0.1)),
        (DURATION, "s", uniform_edges(300.0, 5.0)),
    ]
}

/// Pools the per-step measures of all events (duration is per event).
pub fn descriptive_stats(events: &[CarFollowingEvent]) -> Result<StatsReport> {
    if events.is_empty() {
        return Err(Error::Empty("no events to summarize"));
    }
    let mut pooled: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for ev in events {
        pooled.entry(SPACE_GAP).or_default().extend_from_slice(ev.spacing());
        pooled.entry(FOLLOWING_SPEED).or_default().extend_from_slice(ev.v_fv());
        pooled.entry(TIME_GAP).or_default().extend(
            ev.spacing()
                .iter()
                .zip(ev.v_fv())
                .filter(|(_, v)| **v >= TIME_GAP_MIN_SPEED_MPS)
                .map(|(s, v)| s / v),
        );
        pooled.entry(ABS_RELATIVE_SPEED).or_default().extend(ev.dv().iter().map(|d| d.abs()));
        pooled
            .entry(ABS_ACCELERATION)
            .or_default()
            .extend(ev.v_fv().windows(2).map(|w| ((w[1] - w[0]) / ev.dt_s).abs()));
        pooled.entry(DURATION).or_default().push(ev.duration_s());
    }

    let mut measures = BTreeMap::new();
    for (name, unit, edges) in measure_layout() {
        let values = pooled.remove(name).unwrap_or_default();
        measures.insert(
            name.to_string(),
            MeasureStats {
                unit: unit.to_string(),
                summary: Moments::of(&values),
                histogram: histogram(&values, &edges)?,
            },
        );
    }
    Ok(StatsReport {
        n_events: events.len(),
        measures,
    })
}
