//! Regenerates the checked-in fixtures under `fixtures/`.
//!
//! ```text
//! cargo run --example make_fixtures [-- <dir>]
//! ```
//!
//! * `mini.csv`: five leader/follower scenarios for the extraction rules.
//! * `synthetic_200.csv`: 100 synthetic IDM pairs, 200 vehicles.
//! * `golden_report.md`: benchmark table of four reference policies.

use std::path::PathBuf;

use followbench::bench::{run_benchmark, BenchConfig, Dataset};
use followbench::models::IdmParams;
use followbench::policy::{ConstantPolicy, IdmModel, ModelHandle};
use followbench::synth::{event_to_tracks, synthesize_set, LeaderProfile, SynthSetSpec};
use followbench::traj::{save_tracks, TrajectorySample, VehicleTrack};

const DT: f64 = 0.1;
const LENGTH_M: f64 = 5.0;

struct Pose {
    x: f64,
    v: f64,
    lateral: f64,
    leader: Option<i64>,
}

fn track(id: i64, n: usize, pose: impl Fn(f64) -> Pose) -> VehicleTrack {
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / 10.0;
            let p = pose(t);
            TrajectorySample {
                time_s: t,
                longitudinal_pos_m: p.x,
                lateral_pos_m: p.lateral,
                speed_mps: p.v,
                accel_mps2: None,
                lane_id: 1,
                preceding_vehicle_id: p.leader,
                vehicle_length_m: LENGTH_M,
                is_av: false,
            }
        })
        .collect();
    VehicleTrack::new(id, "mini", DT, samples).expect("valid fixture track")
}

fn cruise(x0: f64, v: f64, lateral: f64, leader: Option<i64>) -> impl Fn(f64) -> Pose {
    move |t| Pose {
        x: x0 + v * t,
        v,
        lateral,
        leader,
    }
}

fn mini_tracks() -> Vec<VehicleTrack> {
    let mut tracks = vec![
        // 20 s of clean following.
        track(1, 201, cruise(30.0, 12.0, 0.0, None)),
        track(2, 201, cruise(0.0, 12.0, 0.0, Some(1))),
        // 14.9 s, just short.
        track(3, 150, cruise(30.0, 12.0, 0.0, None)),
        track(4, 150, cruise(0.0, 12.0, 0.0, Some(3))),
        // Leader switches after 12 s of a 24 s track.
        track(5, 241, cruise(30.0, 12.0, 0.0, None)),
        track(7, 241, cruise(30.0, 12.0, 1.0, None)),
        track(6, 241, |t| Pose {
            leader: Some(if t < 12.0 - 1e-9 { 5 } else { 7 }),
            ..cruise(0.0, 12.0, 0.0, None)(t)
        }),
        // 20 s, but 2.5 m apart laterally.
        track(8, 201, cruise(30.0, 12.0, 2.5, None)),
        track(9, 201, cruise(0.0, 12.0, 0.0, Some(8))),
    ];
    // 40 s of oscillating speed with a 2 s lateral excursion in the middle.
    let wave = |x0: f64| {
        move |t: f64| (x0 + 12.0 * t - (2.0 / 0.3) * (0.3 * t).cos(), 12.0 + 2.0 * (0.3 * t).sin())
    };
    tracks.push(track(10, 401, |t| {
        let (x, v) = wave(30.0)(t);
        Pose { x, v, lateral: 0.0, leader: None }
    }));
    tracks.push(track(11, 401, |t| {
        let (x, v) = wave(0.0)(t);
        let lateral = if (19.0..21.0).contains(&t) { 3.0 } else { 0.0 };
        Pose { x, v, lateral, leader: Some(10) }
    }));
    tracks
}

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&dir)?;

    save_tracks(dir.join("mini.csv"), &mini_tracks())?;

    let set = SynthSetSpec {
        duration_s: 20.0,
        noise_std_mps2: 0.2,
        ..SynthSetSpec::new(LeaderProfile::from_name("sinusoidal")?, 100, 42)
    };
    let mut tracks = Vec::new();
    for (i, e) in synthesize_set(&set)?.iter().enumerate() {
        let (lv, fv) = event_to_tracks(e, "synthetic", 2 * i as i64 + 1, 2 * i as i64 + 2, 0.0, LENGTH_M)?;
        tracks.extend([lv, fv]);
    }
    save_tracks(dir.join("synthetic_200.csv"), &tracks)?;

    let events = synthesize_set(&SynthSetSpec {
        duration_s: 15.0,
        ..SynthSetSpec::new(LeaderProfile::from_name("stop_and_go")?, 12, 3)
    })?;
    let models = vec![
        ("IDM".to_string(), ModelHandle::Idm(IdmModel::new(IdmParams::default())?)),
        ("Replay".to_string(), ModelHandle::Replay),
        ("Coast".to_string(), ModelHandle::Constant(ConstantPolicy::new(0.0))),
        ("Throttle".to_string(), ModelHandle::Constant(ConstantPolicy::new(5.0))),
    ];
    let datasets = [Dataset {
        id: "Synth".into(),
        events,
    }];
    let report = run_benchmark(&models, &datasets, &BenchConfig::default())?;
    std::fs::write(dir.join("golden_report.md"), report.to_markdown())?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
