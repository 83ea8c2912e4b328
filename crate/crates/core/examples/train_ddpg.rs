//! DDPG actor trained on constant-speed leaders.
//!
//! ```text
//! cargo run --release --example train_ddpg [-- <episodes>]
//! ```
//!
//! The follower starts 3 m/s slower than its leader, so standing still on
//! the throttle lets the gap run away. The printout compares the trained
//! actor to that zero-acceleration baseline on probe events.

use followbench::calib::{fitness, FitnessAggregate};
use followbench::ddpg::{train_ddpg, DDPGConfig};
use followbench::policy::ConstantPolicy;
use followbench::synth::{synthesize_set, FollowerInit, LeaderProfile, SynthSetSpec};

fn main() -> anyhow::Result<()> {
    let episodes = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let set = |n, seed| {
        synthesize_set(&SynthSetSpec {
            init: FollowerInit::Offset {
                speed_offset_mps: -3.0,
                gap_factor: 1.0,
            },
            duration_s: 15.0,
            ..SynthSetSpec::new(LeaderProfile::Constant { speed_mps: 15.0 }, n, seed)
        })
    };
    let (train, probe) = (set(10, 1)?, set(5, 2)?);

    let cfg = DDPGConfig {
        episodes,
        ..DDPGConfig::default()
    };
    let (actor, report) = train_ddpg(&train, &probe, &cfg)?;
    for e in report.episodes.iter().filter(|e| e.probe_mse.is_some()) {
        println!(
            "episode {:>4}  return {:>9.1}  collided {:<5}  probe MSE {:.2} m²",
            e.episode,
            e.episode_return,
            e.collided,
            e.probe_mse.unwrap_or(f64::NAN)
        );
    }
    let baseline = fitness(&ConstantPolicy::new(0.0), &probe, FitnessAggregate::PerEvent)?;
    let late = report.episodes.iter().rev().take(50).filter(|e| e.collided).count();
    println!("zero-acceleration baseline {baseline:.2} m²; collisions in last 50 episodes: {late}");
    println!("actor: {} bytes of weight JSON", serde_json::to_string(&actor)?.len());
    Ok(())
}
