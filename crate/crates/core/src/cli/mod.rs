//! The `followbench` command line.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` into one
//! output directory. Exit codes: 0 on success, 1 on invalid configuration or
//! a failed run, 2 on usage errors.

mod config;

pub use config::{
    preset, BenchmarkSection, CalibrateSection, DatasetEntry, DatasetPreset, ExtractSection, RunConfig,
    SynthSection, TrainDdpgSection, TrainNnSection, TrainRnnSection,
};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bench::{run_benchmark, CollisionPolicy, Dataset};
use crate::calib::{calibrate, ModelFamily};
use crate::ddpg::train_ddpg;
use crate::error::Error;
use crate::events::store::write_json;
use crate::events::{
    descriptive_stats, extract_events, read_event_store, split_dataset, write_event_store, write_stats,
    CarFollowingEvent,
};
use crate::neural::{train_supervised, NetSpec};
use crate::policy::ModelHandle;
use crate::synth::{event_to_tracks, synthesize_set, FollowerInit, LeaderProfile, SynthSetSpec};
use crate::traj::{load_tracks, resample, save_tracks, smooth_track, EdgeMode, SmoothingConfig};

pub const TOOLKIT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "FOLLOWBENCH_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "followbench", version, about = "Car-following model benchmarking toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for extraction, calibration and evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; defaults to `$FOLLOWBENCH_OUT/<command>` or `runs/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic IDM events and the matching trajectory file.
    Synth {
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Extract car-following events from a trajectory file and split them.
    Extract {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Registry entry or preset (canonical, ngsim, highd, lyft, waymo, spmd).
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Descriptive statistics and histograms of an event store.
    Stats {
        #[arg(long)]
        events: PathBuf,
    },
    /// Calibrate GHR or IDM parameters with the genetic algorithm.
    Calibrate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_parser = ["idm", "ghr"])]
        family: Option<String>,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Train the feed-forward acceleration network.
    TrainNn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the recurrent acceleration network.
    TrainRnn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train a DDPG actor in the car-following environment.
    TrainDdpg {
        #[arg(long)]
        train: PathBuf,
        /// Events used to score the greedy actor during training.
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate one model on one event store.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate every registered model on every registered test set.
    Benchmark {
        /// `name=path/to/model.json`, repeatable.
        #[arg(long = "model", value_parser = parse_pair)]
        models: Vec<(String, PathBuf)>,
        /// `id=path/to/test.csv`, repeatable.
        #[arg(long = "data", value_parser = parse_pair)]
        datasets: Vec<(String, PathBuf)>,
        #[arg(long, value_parser = ["truncate", "skip"])]
        policy: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Extract { .. } => "extract",
            Command::Stats { .. } => "stats",
            Command::Calibrate { .. } => "calibrate",
            Command::TrainNn { .. } => "train-nn",
            Command::TrainRnn { .. } => "train-rnn",
            Command::TrainDdpg { .. } => "train-ddpg",
            Command::Evaluate { .. } => "evaluate",
            Command::Benchmark { .. } => "benchmark",
        }
    }
}

fn parse_pair(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), PathBuf::from(v))),
        _ => Err(format!("expected NAME=PATH, got `{s}`")),
    }
}

/// Config file plus flag overrides, validated.
pub fn effective_config(cli: &Cli) -> crate::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match &cli.command {
        Command::Synth { profile, n, noise, duration } => {
            if let Some(p) = profile {
                cfg.synth.profile = p.clone();
            }
            if let Some(n) = n {
                cfg.synth.n = *n;
            }
            if let Some(x) = noise {
                cfg.synth.noise_std_mps2 = *x;
            }
            if let Some(d) = duration {
                cfg.synth.duration_s = *d;
            }
        }
        Command::Extract { dataset: Some(d), .. } => cfg.extract.dataset = d.clone(),
        Command::Calibrate { family, generations, .. } => {
            if let Some(f) = family {
                let family = if f == "ghr" { ModelFamily::Ghr } else { ModelFamily::Idm };
                if family != cfg.calibrate.family {
                    cfg.calibrate.bounds_low = None;
                    cfg.calibrate.bounds_high = None;
                }
                cfg.calibrate.family = family;
            }
            if let Some(g) = generations {
                cfg.calibrate.ga.generations = *g;
            }
        }
        Command::TrainNn { epochs: Some(e), .. } => cfg.train_nn.adam.epochs = *e,
        Command::TrainRnn { epochs: Some(e), .. } => cfg.train_rnn.adam.epochs = *e,
        Command::TrainDdpg { episodes: Some(e), .. } => cfg.train_ddpg.ddpg.episodes = *e,
        Command::Benchmark { models, datasets, policy } => {
            cfg.benchmark.models.extend(models.iter().cloned());
            cfg.benchmark.datasets.extend(datasets.iter().cloned());
            if let Some(p) = policy {
                cfg.benchmark.bench.policy_on_collision =
                    if p == "skip" { CollisionPolicy::Skip } else { CollisionPolicy::Truncate };
            }
        }
        _ => {}
    }
    cfg.propagate_seed();
    cfg.validate()?;
    validate_inputs(&cli.command, &cfg)?;
    Ok(cfg)
}

fn require_file(label: &str, path: &Path) -> crate::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{label} `{}` does not exist", path.display())))
    }
}

fn input_paths(command: &Command, cfg: &RunConfig) -> crate::Result<Vec<(String, PathBuf)>> {
    let pairs = |v: &[(&str, &PathBuf)]| v.iter().map(|(k, p)| (k.to_string(), (*p).clone())).collect();
    Ok(match command {
        Command::Synth { .. } => Vec::new(),
        Command::Extract { input, .. } => {
            let (entry, _) = cfg.dataset(&cfg.extract.dataset)?;
            match input.clone().or(entry.input) {
                Some(p) => vec![("input".into(), p)],
                None => {
                    return Err(Error::Config(format!(
                        "extract needs --input or an `input` for dataset `{}`",
                        cfg.extract.dataset
                    )))
                }
            }
        }
        Command::Stats { events } => pairs(&[("events", events)]),
        Command::Calibrate { train, .. } => pairs(&[("train", train)]),
        Command::TrainNn { train, val, .. } | Command::TrainRnn { train, val, .. } => {
            pairs(&[("train", train), ("val", val)])
        }
        Command::TrainDdpg { train, probe, .. } => pairs(&[("train", train), ("probe", probe)]),
        Command::Evaluate { model, events, .. } => pairs(&[("model", model), ("events", events)]),
        Command::Benchmark { .. } => {
            let b = &cfg.benchmark;
            if b.models.is_empty() {
                return Err(Error::Config(
                    "no models registered; pass --model NAME=model.json or add [benchmark.models] to the config".into(),
                ));
            }
            if b.datasets.is_empty() {
                return Err(Error::Config(
                    "no test sets registered; pass --data ID=test.csv or add [benchmark.datasets] to the config".into(),
                ));
            }
            b.models
                .iter()
                .map(|(k, p)| (format!("model:{k}"), p.clone()))
                .chain(b.datasets.iter().map(|(k, p)| (format!("data:{k}"), p.clone())))
                .collect()
        }
    })
}

fn validate_inputs(command: &Command, cfg: &RunConfig) -> crate::Result<()> {
    for (label, p) in input_paths(command, cfg)? {
        require_file(&label, &p)?;
    }
    Ok(())
}

/// `--out`, then the config's `out`, then `$FOLLOWBENCH_OUT/<command>`, then `runs/<command>`.
pub fn output_dir(cfg: &RunConfig, command: &str, env_root: Option<PathBuf>) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| env_root.unwrap_or_else(|| PathBuf::from("runs")).join(command))
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    toolkit: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: BTreeMap<String, FileDigest>,
    artifacts: BTreeMap<String, String>,
    summary: Value,
}

/// What a command reports back for its manifest.
struct Outcome {
    summary: Value,
    /// Set when the run completed but must still exit nonzero.
    failure: Option<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, failure: None }
    }
}

fn load_events(path: &Path) -> anyhow::Result<Vec<CarFollowingEvent>> {
    let (events, _) = read_event_store(path).with_context(|| format!("reading events {}", path.display()))?;
    if events.is_empty() {
        bail!("{} holds no events", path.display());
    }
    Ok(events)
}

fn save_model(out: &Path, model: &ModelHandle) -> anyhow::Result<()> {
    write_json(&out.join("model.json"), model)?;
    Ok(())
}

fn run_synth(cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    let s = &cfg.synth;
    let set = SynthSetSpec {
        init: match s.speed_offset_mps {
            Some(speed_offset_mps) => FollowerInit::Offset {
                speed_offset_mps,
                gap_factor: s.gap_factor,
            },
            None => FollowerInit::Equilibrium,
        },
        noise_std_mps2: s.noise_std_mps2,
        duration_s: s.duration_s,
        ..SynthSetSpec::new(LeaderProfile::from_name(&s.profile)?, s.n, cfg.seed)
    };
    let events = synthesize_set(&set)?;
    write_event_store(out, "events", &events, "synth", None, "")?;
    let mut tracks = Vec::with_capacity(2 * events.len());
    for (i, e) in events.iter().enumerate() {
        let (lv, fv) = event_to_tracks(e, "synth", 2 * i as i64 + 1, 2 * i as i64 + 2, 0.0, 5.0)?;
        tracks.push(lv);
        tracks.push(fv);
    }
    save_tracks(out.join("tracks.csv"), &tracks)?;
    Ok(Outcome::ok(json!({ "n_events": events.len(), "n_tracks": tracks.len() })))
}

fn run_extract(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let name = &cfg.extract.dataset;
    let (_, preset) = cfg.dataset(name)?;
    let tracks = load_tracks(input, &preset.schema).with_context(|| format!("loading {}", input.display()))?;
    let smoothing = SmoothingConfig {
        window: cfg.extract.window,
        polyorder: cfg.extract.polyorder,
        edge: EdgeMode::Interp,
    };
    let tracks = tracks
        .par_iter()
        .map(|t| {
            let t = match preset.resample_dt_s {
                Some(dt) => resample(t, dt)?,
                None => t.clone(),
            };
            if cfg.extract.smooth {
                smooth_track(&t, &smoothing)
            } else {
                Ok(t)
            }
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let events = extract_events(&tracks, &preset.criteria)?;
    if events.is_empty() {
        bail!("no car-following events found in {}", input.display());
    }
    let n_events = events.len();
    let hash = sha256_file(input)?;
    let split = split_dataset(events, cfg.extract.split_ratios, cfg.seed)?;
    for (part, evs) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        write_event_store(out, part, evs, name, Some(preset.criteria), &hash)?;
    }
    Ok(Outcome::ok(json!({
        "n_tracks": tracks.len(),
        "n_events": n_events,
        "n_train": split.train.len(),
        "n_val": split.val.len(),
        "n_test": split.test.len(),
    })))
}

fn run_stats(events: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let report = descriptive_stats(&load_events(events)?)?;
    write_stats(out, &report)?;
    Ok(Outcome::ok(json!({ "n_events": report.n_events })))
}

fn run_calibrate(cfg: &RunConfig, train: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let c = &cfg.calibrate;
    let events = load_events(train)?;
    let result = calibrate(c.family, &events, &c.bounds()?, &c.ga)?;
    save_model(out, &result.model)?;
    write_json(&out.join("calibration.json"), &result)?;
    result.save_trace_csv(out.join("trace.csv"))?;
    Ok(Outcome::ok(json!({
        "family": c.family,
        "best_fitness": result.best_fitness,
        "best_genes": result.best_genes,
    })))
}

fn run_supervised(spec: NetSpec, adam: &crate::neural::AdamConfig, train: &Path, val: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let (model, report) = train_supervised(&spec, &load_events(train)?, &load_events(val)?, adam)?;
    save_model(out, &model)?;
    report.save_csv(out.join("losses.csv"))?;
    Ok(Outcome::ok(json!({
        "best_epoch": report.best_epoch,
        "best_val_loss": report.val_loss.get(report.best_epoch),
    })))
}

fn run_ddpg(cfg: &RunConfig, train: &Path, probe: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let (model, report) = train_ddpg(&load_events(train)?, &load_events(probe)?, &cfg.train_ddpg.ddpg)?;
    save_model(out, &model)?;
    report.save_csv(out.join("episodes.csv"))?;
    let tail = report.episodes.len().min(50);
    let late_collisions = report.episodes[report.episodes.len() - tail..]
        .iter()
        .filter(|e| e.collided)
        .count();
    Ok(Outcome::ok(json!({
        "episodes": report.episodes.len(),
        "final_probe_mse": report.final_probe_mse(),
        "collisions_last_50": late_collisions,
    })))
}

fn load_model(path: &Path) -> anyhow::Result<ModelHandle> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing model {}", path.display()))
}

fn run_bench(
    cfg: &RunConfig,
    models: &BTreeMap<String, PathBuf>,
    datasets: &BTreeMap<String, PathBuf>,
    out: &Path,
) -> anyhow::Result<Outcome> {
    let models = models
        .iter()
        .map(|(k, p)| Ok((k.clone(), load_model(p)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let datasets = datasets
        .iter()
        .map(|(k, p)| {
            Ok(Dataset {
                id: k.clone(),
                events: load_events(p)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = run_benchmark(&models, &datasets, &cfg.benchmark.bench)?;
    report.write(out)?;
    let failure = report
        .any_failures()
        .then(|| "some models produced non-finite accelerations; see failed_events in report.json".to_string());
    Ok(Outcome {
        summary: json!({ "config_hash": report.config_hash, "rows": report.rows.len() }),
        failure,
    })
}

fn execute(command: &Command, cfg: &RunConfig, out: &Path) -> anyhow::Result<Outcome> {
    match command {
        Command::Synth { .. } => run_synth(cfg, out),
        Command::Extract { input, .. } => {
            let input = match input {
                Some(p) => p.clone(),
                None => cfg.dataset(&cfg.extract.dataset)?.0.input.context("no input")?,
            };
            run_extract(cfg, &input, out)
        }
        Command::Stats { events } => run_stats(events, out),
        Command::Calibrate { train, .. } => run_calibrate(cfg, train, out),
        Command::TrainNn { train, val, .. } => run_supervised(
            NetSpec::Mlp(cfg.train_nn.net.clone()),
            &cfg.train_nn.adam,
            train,
            val,
            out,
        ),
        Command::TrainRnn { train, val, .. } => run_supervised(
            NetSpec::Recurrent(cfg.train_rnn.net.clone()),
            &cfg.train_rnn.adam,
            train,
            val,
            out,
        ),
        Command::TrainDdpg { train, probe, .. } => run_ddpg(cfg, train, probe, out),
        Command::Evaluate { model, events, name } => {
            let name = name.clone().unwrap_or_else(|| "model".into());
            let id = events.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            run_bench(
                cfg,
                &BTreeMap::from([(name, model.clone())]),
                &BTreeMap::from([(id, events.clone())]),
                out,
            )
        }
        Command::Benchmark { .. } => run_bench(cfg, &cfg.benchmark.models, &cfg.benchmark.datasets, out),
    }
}

fn write_manifest(command: &Command, cfg: &RunConfig, out: &Path, summary: Value) -> anyhow::Result<()> {
    let mut inputs = BTreeMap::new();
    for (label, path) in input_paths(command, cfg)? {
        let sha256 = sha256_file(&path)?;
        inputs.insert(label, FileDigest { path, sha256 });
    }
    let mut artifacts = BTreeMap::new();
    for entry in fs::read_dir(out)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if path.is_file() && name != MANIFEST_FILE {
            artifacts.insert(name, sha256_file(&path)?);
        }
    }
    // Location and thread count do not change results, so they stay out of the echo.
    let echo = RunConfig {
        out: None,
        jobs: None,
        ..cfg.clone()
    };
    let manifest = RunManifest {
        toolkit: TOOLKIT,
        version: VERSION,
        command: command.name(),
        seed: cfg.seed,
        config: &echo,
        inputs,
        artifacts,
        summary,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

/// Runs one parsed command line and returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return 1;
        }
    };
    let out = output_dir(&cfg, cli.command.name(), std::env::var_os(OUT_ENV).map(PathBuf::from));
    let result = (|| -> anyhow::Result<Option<String>> {
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs.unwrap_or(0))
            .build()?;
        let outcome = pool.install(|| execute(&cli.command, &cfg, &out))?;
        write_manifest(&cli.command, &cfg, &out, outcome.summary)?;
        Ok(outcome.failure)
    })();
    match result {
        Ok(None) => {
            log::info!("{} finished; artifacts in {}", cli.command.name(), out.display());
            0
        }
        Ok(Some(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {} failed: {e:#}", cli.command.name());
            1
        }
    }
}

/// Parses `args` (program name first) and runs; usage errors exit 2 with help text.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(cli),
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dir_precedence() {
        let mut cfg = RunConfig::default();
        assert_eq!(output_dir(&cfg, "synth", None), PathBuf::from("runs/synth"));
        assert_eq!(
            output_dir(&cfg, "synth", Some("/tmp/root".into())),
            PathBuf::from("/tmp/root/synth")
        );
        cfg.out = Some("here".into());
        assert_eq!(output_dir(&cfg, "synth", Some("/tmp/root".into())), PathBuf::from("here"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 1\n[synth]\nn = 3\nprofile = \"constant\"\n").unwrap();
        let cli = Cli::try_parse_from([
            "followbench",
            "synth",
            "--config",
            path.to_str().unwrap(),
            "--n",
            "9",
            "--seed",
            "4",
        ])
        .unwrap();
        let cfg = effective_config(&cli).unwrap();
        assert_eq!((cfg.seed, cfg.synth.n, cfg.synth.profile.as_str()), (4, 9, "constant"));
        assert_eq!(cfg.calibrate.ga.seed, 4);
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("a=b.json").unwrap(), ("a".into(), PathBuf::from("b.json")));
        assert!(parse_pair("nope").is_err());
        assert!(parse_pair("=x").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["followbench", "frobnicate"]), 2);
        assert_eq!(run(["followbench"]), 2);
    }
}
