//! Closed-loop rollouts of the GHR and IDM laws.
//!
//! Generates oscillating-leader events with a known IDM driver, then rolls out the
//! generator itself, a detuned IDM and a GHR model against the same leaders.

use followbench::bench::evaluate_model;
use followbench::bench::BenchConfig;
use followbench::models::{GhrParams, IdmParams};
use followbench::policy::{GhrModel, IdmModel, ModelHandle};
use followbench::sim::rollout;
use followbench::synth::{synthesize_set, LeaderProfile, SynthSetSpec};

fn main() -> anyhow::Result<()> {
    let events = synthesize_set(&SynthSetSpec::new(LeaderProfile::from_name("sinusoidal")?, 20, 5))?;
    let dt = events[0].dt_s;

    let generator = IdmParams::default();
    let timid = IdmParams {
        t_des: 2.5,
        ..generator
    };
    let ghr = GhrParams {
        c: 0.6,
        m_exp: 0.2,
        l_exp: 0.5,
        reaction_time_s: 0.5,
    };
    let models = [
        ("IDM (generator)", ModelHandle::Idm(IdmModel::new(generator)?)),
        ("IDM (T = 2.5 s)", ModelHandle::Idm(IdmModel::new(timid)?)),
        ("GHR", ModelHandle::Ghr(GhrModel::new(ghr, dt)?)),
    ];
    for (name, model) in &models {
        let row = evaluate_model(name, model, "sinusoidal", &events, &BenchConfig::default())?;
        println!(
            "{name:<16} MSE {:>8.3} m²  collisions {}/{}",
            row.mse_spacing_m2.unwrap_or(f64::NAN),
            row.collision_count,
            row.events_evaluated
        );
    }

    let r = rollout(&models[2].1, &events[0])?;
    println!("\nGHR on {}: first spacings", events[0].event_id);
    for k in (0..r.spacing_sim_m.len()).step_by(50) {
        println!("  t={:>5.1}s  sim {:>6.2} m  obs {:>6.2} m", k as f64 * dt, r.spacing_sim_m[k], events[0].spacing()[k]);
    }
    Ok(())
}
