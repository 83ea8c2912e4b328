//! Raw vehicle trajectories: canonical samples, per-vehicle tracks, CSV
//! ingestion, resampling and Savitzky–Golay smoothing.
//!
//! Everything here is SI: meters, seconds, m/s and m/s².

mod io;
mod resample;
mod savgol;

pub use io::{load_tracks, read_tracks, save_tracks, write_tracks, SchemaAdapter, CANONICAL_HEADER};
pub use resample::resample;
pub use savgol::{savitzky_golay, savitzky_golay_with, EdgeMode, SavitzkyGolay};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical sampling step (10 Hz).
pub const CANONICAL_DT_S: f64 = 0.1;

/// Tolerance on sample spacing when checking that a track is regularly sampled.
pub const TIME_TOLERANCE_S: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time_s: f64,
    pub longitudinal_pos_m: f64,
    pub lateral_pos_m: f64,
    pub speed_mps: f64,
    pub accel_mps2: Option<f64>,
    pub lane_id: i64,
    pub preceding_vehicle_id: Option<i64>,
    pub vehicle_length_m: f64,
    pub is_av: bool,
}

impl TrajectorySample {
    pub fn validate(&self) -> Result<()> {
        if !self.time_s.is_finite() {
            return Err(Error::InvalidSample(format!("non-finite time {}", self.time_s)));
        }
        if !(self.speed_mps >= 0.0) || !self.speed_mps.is_finite() {
            return Err(Error::InvalidSample(format!("speed {} m/s", self.speed_mps)));
        }
        if !(self.vehicle_length_m > 0.0) || !self.vehicle_length_m.is_finite() {
            return Err(Error::InvalidSample(format!(
                "vehicle length {} m",
                self.vehicle_length_m
            )));
        }
        if !self.longitudinal_pos_m.is_finite() || !self.lateral_pos_m.is_finite() {
            return Err(Error::InvalidSample("non-finite position".into()));
        }
        if let Some(a) = self.accel_mps2 {
            if !a.is_finite() {
                return Err(Error::InvalidSample("non-finite acceleration".into()));
            }
        }
        Ok(())
    }
}

/// One vehicle's regularly sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub vehicle_id: i64,
    pub dataset_id: String,
    pub dt_s: f64,
    pub samples: Vec<TrajectorySample>,
}

impl VehicleTrack {
    /// Builds a track, checking sample validity and the constant-step invariant.
    pub fn new(
        vehicle_id: i64,
        dataset_id: impl Into<String>,
        dt_s: f64,
        samples: Vec<TrajectorySample>,
    ) -> Result<Self> {
        let track = VehicleTrack {
            vehicle_id,
            dataset_id: dataset_id.into(),
            dt_s,
            samples,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::InvalidArgument(format!("dt_s = {}", self.dt_s)));
        }
        for s in &self.samples {
            s.validate()?;
        }
        for pair in self.samples.windows(2) {
            let step = pair[1].time_s - pair[0].time_s;
            if step <= 0.0 {
                return Err(Error::InvalidSample(format!(
                    "vehicle {}: time not strictly increasing at t={}",
                    self.vehicle_id, pair[1].time_s
                )));
            }
            if (step - self.dt_s).abs() > TIME_TOLERANCE_S {
                return Err(Error::IrregularSampling {
                    vehicle_id: self.vehicle_id,
                    time_s: pair[1].time_s,
                    dt_s: self.dt_s,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.time_s)
    }

    pub fn duration_s(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.time_s - a.time_s,
            _ => 0.0,
        }
    }

    /// Index of the sample taken at `time_s`, if the track covers that instant.
    pub fn index_at(&self, time_s: f64) -> Option<usize> {
        let t0 = self.start_time()?;
        let k = ((time_s - t0) / self.dt_s).round();
        if k < 0.0 || k as usize >= self.samples.len() {
            return None;
        }
        let k = k as usize;
        ((self.samples[k].time_s - time_s).abs() <= TIME_TOLERANCE_S).then_some(k)
    }

    pub fn sample_at(&self, time_s: f64) -> Option<&TrajectorySample> {
        self.index_at(time_s).map(|k| &self.samples[k])
    }
}

/// Smoothing settings applied to a track before event extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub window: usize,
    pub polyorder: usize,
    pub edge: EdgeMode,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            window: 11,
            polyorder: 3,
            edge: EdgeMode::Interp,
        }
    }
}

/// Smooths positions and speed independently. When the track carries no
/// acceleration, it is derived from the smoothed speed by central differences.
///
/// Tracks shorter than the filter window are returned unchanged.
pub fn smooth_track(track: &VehicleTrack, cfg: &SmoothingConfig) -> Result<VehicleTrack> {
    if track.len() < cfg.window {
        log::debug!(
            "vehicle {} has {} samples, shorter than smoothing window {}; left as is",
            track.vehicle_id,
            track.len(),
            cfg.window
        );
        return Ok(track.clone());
    }
    let filter = SavitzkyGolay::new(cfg.window, cfg.polyorder, cfg.edge)?;
    let column = |f: fn(&TrajectorySample) -> f64| -> Vec<f64> { track.samples.iter().map(f).collect() };
    let lon = filter.apply(&column(|s| s.longitudinal_pos_m))?;
    let lat = filter.apply(&column(|s| s.lateral_pos_m))?;
    let speed: Vec<f64> = filter
        .apply(&column(|s| s.speed_mps))?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let has_accel = track.samples.iter().all(|s| s.accel_mps2.is_some());
    let accel = if has_accel {
        None
    } else {
        Some(central_difference(&speed, track.dt_s))
    };

    let samples = track
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| TrajectorySample {
            longitudinal_pos_m: lon[i],
            lateral_pos_m: lat[i],
            speed_mps: speed[i],
            accel_mps2: match &accel {
                Some(a) => Some(a[i]),
                None => s.accel_mps2,
            },
            ..s.clone()
        })
        .collect();
    Ok(VehicleTrack {
        samples,
        ..track.clone()
    })
}

/// First derivative by central differences, one-sided at the ends.
pub fn central_difference(values: &[f64], dt_s: f64) -> Vec<f64> {
    let n = values.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (values[1] - values[0]) / dt_s
                } else if i == n - 1 {
                    (values[n - 1] - values[n - 2]) / dt_s
                } else {
                    (values[i + 1] - values[i - 1]) / (2.0 * dt_s)
                }
            })
            .collect(),
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Straight constant-speed track.
    pub fn constant_track(
        vehicle_id: i64,
        leader: Option<i64>,
        x0: f64,
        speed: f64,
        lateral: f64,
        dt: f64,
        n: usize,
    ) -> VehicleTrack {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                TrajectorySample {
                    time_s: t,
                    longitudinal_pos_m: x0 + speed * t,
                    lateral_pos_m: lateral,
                    speed_mps: speed,
                    accel_mps2: None,
                    lane_id: 1,
                    preceding_vehicle_id: leader,
                    vehicle_length_m: 4.5,
                    is_av: false,
                }
            })
            .collect();
        VehicleTrack::new(vehicle_id, "test", dt, samples).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::constant_track;
    use super::*;

    #[test]
    fn index_lookup_respects_tolerance() {
        let t = constant_track(1, None, 0.0, 10.0, 0.0, 0.1, 11);
        assert_eq!(t.index_at(0.5), Some(5));
        assert_eq!(t.index_at(0.55), None);
        assert_eq!(t.index_at(1.1), None);
        assert_eq!(t.index_at(-0.1), None);
    }

    #[test]
    fn irregular_sampling_rejected() {
        let mut t = constant_track(1, None, 0.0, 10.0, 0.0, 0.1, 5);
        t.samples[3].time_s += 0.01;
        assert!(matches!(t.validate(), Err(Error::IrregularSampling { .. })));
    }

    #[test]
    fn smoothing_derives_acceleration() {
        let mut t = constant_track(1, None, 0.0, 10.0, 0.0, 0.1, 30);
        for (k, s) in t.samples.iter_mut().enumerate() {
            let tt = k as f64 * 0.1;
            s.speed_mps = 10.0 + 0.5 * tt;
            s.longitudinal_pos_m = 10.0 * tt + 0.25 * tt * tt;
        }
        let sm = smooth_track(&t, &SmoothingConfig::default()).unwrap();
        for s in &sm.samples {
            assert!((s.accel_mps2.unwrap() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn short_track_left_unsmoothed() {
        let t = constant_track(1, None, 0.0, 10.0, 0.0, 0.1, 5);
        assert_eq!(smooth_track(&t, &SmoothingConfig::default()).unwrap(), t);
    }
}
