//! Savitzky-Golay smoothing and rate conversion.
//!
//! Builds a noisy 25 Hz speed trace, smooths it with the default
//! window-11/order-3 filter and resamples to the canonical 10 Hz.

use followbench::traj::{resample, savitzky_golay_with, EdgeMode, TrajectorySample, VehicleTrack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.3)?;
    let dt = 0.04;
    let truth: Vec<f64> = (0..250).map(|k| 15.0 + 3.0 * (0.4 * k as f64 * dt).sin()).collect();
    let noisy: Vec<f64> = truth.iter().map(|v| v + noise.sample(&mut rng)).collect();

    let rms = |a: &[f64]| (a.iter().zip(&truth).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    for edge in [EdgeMode::Interp, EdgeMode::Mirror] {
        let smooth = savitzky_golay_with(&noisy, 11, 3, edge)?;
        println!("{edge:?}: rms error {:.3} -> {:.3} m/s", rms(&noisy), rms(&smooth));
    }

    let smooth = savitzky_golay_with(&noisy, 11, 3, EdgeMode::Interp)?;
    let mut x = 0.0;
    let samples = smooth
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            x += v * dt;
            TrajectorySample {
                time_s: k as f64 * dt,
                longitudinal_pos_m: x,
                lateral_pos_m: 0.0,
                speed_mps: v,
                accel_mps2: None,
                lane_id: 1,
                preceding_vehicle_id: None,
                vehicle_length_m: 4.5,
                is_av: false,
            }
        })
        .collect();
    let track = VehicleTrack::new(1, "drone", dt, samples)?;
    let ten_hz = resample(&track, 0.1)?;
    println!("{} samples at 25 Hz -> {} at 10 Hz", track.len(), ten_hz.len());
    Ok(())
}
