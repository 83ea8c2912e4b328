use super::{TrajectorySample, VehicleTrack};
use crate::error::{Error, Result};

const SAME_TIME_S: f64 = 1e-9;

/// Resamples a track onto `t0, t0 + Δ, …` within its original span.
///
/// Positions, speed and acceleration are linearly interpolated; lane and
/// leader labels come from the nearest original sample. Asking for the
/// track's own step returns it unchanged.
pub fn resample(track: &VehicleTrack, target_dt_s: f64) -> Result<VehicleTrack> {
    if !(target_dt_s > 0.0) || !target_dt_s.is_finite() {
        return Err(Error::InvalidArgument(format!("target dt {target_dt_s} s")));
    }
    if track.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "vehicle {}: need at least 2 samples to resample",
            track.vehicle_id
        )));
    }
    let span = track.duration_s();
    if span + SAME_TIME_S < target_dt_s {
        return Err(Error::InvalidArgument(format!(
            "vehicle {}: span {span} s is shorter than one target step {target_dt_s} s",
            track.vehicle_id
        )));
    }
    if (target_dt_s - track.dt_s).abs() <= SAME_TIME_S {
        return Ok(track.clone());
    }

    let t0 = track.samples[0].time_s;
    let n_out = (span / target_dt_s + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = track.samples.iter().map(|s| s.time_s).collect();
    let samples = (0..n_out)
        .map(|k| {
            let t = t0 + k as f64 * target_dt_s;
            interpolate(&track.samples, &times, t)
        })
        .collect();

    Ok(VehicleTrack {
        vehicle_id: track.vehicle_id,
        dataset_id: track.dataset_id.clone(),
        dt_s: target_dt_s,
        samples,
    })
}

fn interpolate(samples: &[TrajectorySample], times: &[f64], t: f64) -> TrajectorySample {
    // Index of the last sample at or before t, kept inside [0, n-2].
    let upper = times.partition_point(|&ti| ti <= t + SAME_TIME_S);
    let i = upper.saturating_sub(1).min(samples.len() - 2);
    let (a, b) = (&samples[i], &samples[i + 1]);

    if (a.time_s - t).abs() <= SAME_TIME_S {
        return TrajectorySample { time_s: t, ..a.clone() };
    }
    if (b.time_s - t).abs() <= SAME_TIME_S {
        return TrajectorySample { time_s: t, ..b.clone() };
    }

    let w = ((t - a.time_s) / (b.time_s - a.time_s)).clamp(0.0, 1.0);
    let lerp = |x: f64, y: f64| x + w * (y - x);
    let nearest = if w <= 0.5 { a } else { b };
    TrajectorySample {
        time_s: t,
        longitudinal_pos_m: lerp(a.longitudinal_pos_m, b.longitudinal_pos_m),
        lateral_pos_m: lerp(a.lateral_pos_m, b.lateral_pos_m),
        speed_mps: lerp(a.speed_mps, b.speed_mps).max(0.0),
        accel_mps2: match (a.accel_mps2, b.accel_mps2) {
            (Some(x), Some(y)) => Some(lerp(x, y)),
            _ => None,
        },
        lane_id: nearest.lane_id,
        preceding_vehicle_id: nearest.preceding_vehicle_id,
        vehicle_length_m: nearest.vehicle_length_m,
        is_av: nearest.is_av,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::test_support::constant_track;

    #[test]
    fn constant_speed_25hz_to_10hz() {
        let t = constant_track(7, Some(3), 5.0, 13.0, 0.2, 0.04, 251);
        let r = resample(&t, 0.1).unwrap();
        assert_eq!(r.len(), 101);
        assert!(r.validate().is_ok());
        for (k, s) in r.samples.iter().enumerate() {
            assert_eq!(s.speed_mps, 13.0);
            assert!((s.time_s - k as f64 * 0.1).abs() < 1e-12);
            assert!((s.longitudinal_pos_m - (5.0 + 13.0 * s.time_s)).abs() < 1e-9);
            assert_eq!(s.preceding_vehicle_id, Some(3));
        }
    }

    #[test]
    fn linear_interpolation_midpoint() {
        let mut t = constant_track(1, None, 0.0, 0.0, 0.0, 0.04, 4);
        t.samples[2].speed_mps = 8.0;
        t.samples[3].speed_mps = 12.0;
        let r = resample(&t, 0.1).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r.samples[1].speed_mps - 10.0).abs() < 1e-9);
    }

    #[test]
    fn same_rate_is_identity() {
        let t = constant_track(1, Some(2), 1.0, 9.0, 0.0, 0.1, 50);
        assert_eq!(resample(&t, 0.1).unwrap(), t);
    }

    #[test]
    fn resampling_is_idempotent() {
        let mut t = constant_track(1, Some(2), 1.0, 9.0, 0.0, 0.04, 200);
        for (k, s) in t.samples.iter_mut().enumerate() {
            s.speed_mps = 9.0 + (k as f64 * 0.03).sin();
        }
        let once = resample(&t, 0.1).unwrap();
        let twice = resample(&once, 0.1).unwrap();
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a.speed_mps - b.speed_mps).abs() < 1e-9);
            assert!((a.longitudinal_pos_m - b.longitudinal_pos_m).abs() < 1e-9);
        }
    }

    #[test]
    fn labels_from_nearest_sample() {
        // Samples every 0.03 s; t = 0.1 s sits between idx 3 (0.09) and idx 4 (0.12),
        // nearer to idx 3.
        let base = constant_track(1, Some(2), 0.0, 10.0, 0.0, 0.03, 8);
        let mut late = base.clone();
        for s in &mut late.samples[4..] {
            s.preceding_vehicle_id = Some(9);
        }
        assert_eq!(resample(&late, 0.1).unwrap().samples[1].preceding_vehicle_id, Some(2));
        let mut early = base;
        for s in &mut early.samples[3..] {
            s.preceding_vehicle_id = Some(9);
        }
        assert_eq!(resample(&early, 0.1).unwrap().samples[1].preceding_vehicle_id, Some(9));
    }

    #[test]
    fn too_short_or_bad_step() {
        let t = constant_track(1, None, 0.0, 10.0, 0.0, 0.04, 2);
        assert!(resample(&t, 0.1).is_err());
        assert!(resample(&t, 0.0).is_err());
        let single = constant_track(1, None, 0.0, 10.0, 0.0, 0.04, 1);
        assert!(resample(&single, 0.1).is_err());
    }
}
