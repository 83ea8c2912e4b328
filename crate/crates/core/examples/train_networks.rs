//! Supervised MLP and LSTM acceleration models.
//!
//! ```text
//! cargo run --release --example train_networks [-- <out-dir>]
//! ```
//!
//! Both networks learn the acceleration implied by observed follower speeds,
//! are rolled out closed-loop on held-out events and saved as weight JSON.

use std::path::PathBuf;

use followbench::bench::{evaluate_model, BenchConfig};
use followbench::neural::{train_supervised, AdamConfig, MlpSpec, NetSpec, RecurrentSpec};
use followbench::synth::{synthesize_set, LeaderProfile, SynthSetSpec};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let profile = LeaderProfile::from_name("sinusoidal")?;
    let noisy = |n, seed| {
        synthesize_set(&SynthSetSpec {
            noise_std_mps2: 0.1,
            ..SynthSetSpec::new(profile, n, seed)
        })
    };
    let (train, val, test) = (noisy(30, 1)?, noisy(6, 2)?, noisy(6, 3)?);

    let runs = [
        ("nn", NetSpec::Mlp(MlpSpec::default()), AdamConfig { epochs: 30, ..AdamConfig::default() }),
        (
            "lstm",
            NetSpec::Recurrent(RecurrentSpec {
                hidden_size: 32,
                ..RecurrentSpec::default()
            }),
            AdamConfig { epochs: 5, ..AdamConfig::default() },
        ),
    ];
    for (name, spec, adam) in runs {
        let (model, report) = train_supervised(&spec, &train, &val, &adam)?;
        let row = evaluate_model(name, &model, "test", &test, &BenchConfig::default())?;
        println!(
            "{name:<5} best epoch {:>3}  val loss {:.4}  rollout MSE {:.3} m²  collisions {}",
            report.best_epoch,
            report.val_loss[report.best_epoch],
            row.mse_spacing_m2.unwrap_or(f64::NAN),
            row.collision_count
        );
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&model)?)?;
            report.save_csv(dir.join(format!("{name}_losses.csv")))?;
        }
    }
    Ok(())
}
