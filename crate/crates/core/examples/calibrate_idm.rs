//! Genetic-algorithm calibration recovering a known IDM driver.
//!
//! ```text
//! cargo run --release --example calibrate_idm [-- <generations>]
//! ```

use followbench::bench::{evaluate_model, BenchConfig};
use followbench::calib::{calibrate, GAConfig, ModelFamily, ParamBounds};
use followbench::models::IdmParams;
use followbench::synth::{synthesize_set, LeaderProfile, SynthSetSpec};

fn main() -> anyhow::Result<()> {
    let generations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(60);
    let profile = LeaderProfile::from_name("stop_and_go")?;
    let train = synthesize_set(&SynthSetSpec::new(profile, 30, 11))?;
    let test = synthesize_set(&SynthSetSpec::new(profile, 10, 12))?;

    let cfg = GAConfig {
        generations,
        seed: 1,
        ..GAConfig::default()
    };
    let result = calibrate(ModelFamily::Idm, &train, &ParamBounds::default_for(ModelFamily::Idm), &cfg)?;

    let truth = IdmParams::default();
    let truth = [truth.a0, truth.b, truth.v_des, truth.t_des, truth.s0, truth.lambda];
    println!("{:<10} {:>9} {:>9}", "gene", "fitted", "true");
    for ((name, fitted), t) in result.gene_names.iter().zip(&result.best_genes).zip(truth) {
        println!("{name:<10} {fitted:>9.3} {t:>9.3}");
    }
    for g in (0..result.trace.len()).step_by((generations / 6).max(1)) {
        println!("generation {g:>4}: best fitness {:.5}", result.trace[g]);
    }
    let row = evaluate_model("idm", &result.model, "test", &test, &BenchConfig::default())?;
    println!(
        "held-out MSE {:.5} m², collisions {}",
        row.mse_spacing_m2.unwrap_or(f64::NAN),
        row.collision_count
    );
    Ok(())
}
