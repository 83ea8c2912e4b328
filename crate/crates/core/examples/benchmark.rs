//! Table-style benchmark of several models over two test sets.
//!
//! ```text
//! cargo run --release --example benchmark [-- <out-dir>]
//! ```

use followbench::bench::{run_benchmark, BenchConfig, CollisionPolicy, Dataset};
use followbench::calib::{calibrate, GAConfig, ModelFamily, ParamBounds};
use followbench::neural::{train_supervised, AdamConfig, MlpSpec, NetSpec};
use followbench::policy::{ConstantPolicy, ModelHandle};
use followbench::synth::{synthesize_set, LeaderProfile, SynthSetSpec};

fn main() -> anyhow::Result<()> {
    let noisy = |profile: &str, n, seed| -> anyhow::Result<_> {
        Ok(synthesize_set(&SynthSetSpec {
            noise_std_mps2: 0.2,
            ..SynthSetSpec::new(LeaderProfile::from_name(profile)?, n, seed)
        })?)
    };
    let train = noisy("stop_and_go", 20, 1)?;
    let val = noisy("stop_and_go", 5, 2)?;

    let ga = GAConfig {
        population_size: 40,
        generations: 30,
        ..GAConfig::default()
    };
    let idm = calibrate(ModelFamily::Idm, &train, &ParamBounds::default_for(ModelFamily::Idm), &ga)?.model;
    let ghr = calibrate(ModelFamily::Ghr, &train, &ParamBounds::default_for(ModelFamily::Ghr), &ga)?.model;
    let adam = AdamConfig {
        epochs: 20,
        ..AdamConfig::default()
    };
    let (nn, _) = train_supervised(&NetSpec::Mlp(MlpSpec::default()), &train, &val, &adam)?;

    let models = vec![
        ("IDM".to_string(), idm),
        ("GHR".to_string(), ghr),
        ("NN".to_string(), nn),
        ("Coast".to_string(), ModelHandle::Constant(ConstantPolicy::new(0.0))),
    ];
    let datasets = [
        Dataset {
            id: "StopGo".into(),
            events: noisy("stop_and_go", 20, 3)?,
        },
        Dataset {
            id: "Wave".into(),
            events: noisy("sinusoidal", 20, 4)?,
        },
    ];
    for policy in [CollisionPolicy::Truncate, CollisionPolicy::Skip] {
        let report = run_benchmark(&models, &datasets, &BenchConfig { policy_on_collision: policy })?;
        println!("policy on collision: {policy:?}\n\n{}", report.to_markdown());
        if let Some(dir) = std::env::args().nth(1) {
            report.write(std::path::Path::new(&dir).join(format!("{policy:?}").to_lowercase()))?;
        }
    }
    Ok(())
}
