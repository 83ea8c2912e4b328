//! Layered run configuration: TOML file, then command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::calib::{GAConfig, ModelFamily, ParamBounds};
use crate::ddpg::DDPGConfig;
use crate::error::{Error, Result};
use crate::events::{ExtractionCriteria, DEFAULT_SPLIT_RATIOS};
use crate::neural::{AdamConfig, MlpSpec, RecurrentSpec};
use crate::traj::{SchemaAdapter, SmoothingConfig, CANONICAL_DT_S};

type Extra = BTreeMap<String, toml::Value>;

fn reject_unknown(table: &str, extra: &Extra) -> Result<()> {
    match extra.keys().next() {
        Some(k) => Err(Error::Config(format!("unknown key `{k}` in [{table}]"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub profile: String,
    pub n: usize,
    pub noise_std_mps2: f64,
    pub duration_s: f64,
    /// Start the follower this much faster than the leader instead of at equilibrium.
    pub speed_offset_mps: Option<f64>,
    pub gap_factor: f64,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            profile: "stop_and_go".into(),
            n: 50,
            noise_std_mps2: 0.0,
            duration_s: 30.0,
            speed_offset_mps: None,
            gap_factor: 1.0,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractSection {
    /// Registry entry or built-in preset name.
    pub dataset: String,
    pub split_ratios: [f64; 3],
    pub smooth: bool,
    pub window: usize,
    pub polyorder: usize,
    pub min_duration_s: Option<f64>,
    pub max_lateral_gap_m: Option<f64>,
    pub low_speed_filter: Option<bool>,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let sg = SmoothingConfig::default();
        ExtractSection {
            dataset: "canonical".into(),
            split_ratios: DEFAULT_SPLIT_RATIOS,
            smooth: true,
            window: sg.window,
            polyorder: sg.polyorder,
            min_duration_s: None,
            max_lateral_gap_m: None,
            low_speed_filter: None,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateSection {
    pub family: ModelFamily,
    pub bounds_low: Option<Vec<f64>>,
    pub bounds_high: Option<Vec<f64>>,
    #[serde(flatten)]
    pub ga: GAConfig,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            family: ModelFamily::Idm,
            bounds_low: None,
            bounds_high: None,
            ga: GAConfig::default(),
            extra: Extra::new(),
        }
    }
}

impl CalibrateSection {
    pub fn bounds(&self) -> Result<ParamBounds> {
        let d = ParamBounds::default_for(self.family);
        ParamBounds::new(
            self.bounds_low.clone().unwrap_or(d.low),
            self.bounds_high.clone().unwrap_or(d.high),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainNnSection {
    #[serde(flatten)]
    pub net: MlpSpec,
    #[serde(flatten)]
    pub adam: AdamConfig,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRnnSection {
    #[serde(flatten)]
    pub net: RecurrentSpec,
    #[serde(flatten)]
    pub adam: AdamConfig,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainDdpgSection {
    #[serde(flatten)]
    pub ddpg: DDPGConfig,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSection {
    /// Model name → model JSON.
    pub models: BTreeMap<String, PathBuf>,
    /// Dataset id → event store CSV.
    pub datasets: BTreeMap<String, PathBuf>,
    #[serde(flatten)]
    pub bench: BenchConfig,
    #[serde(flatten, skip_serializing)]
    pub extra: Extra,
}

/// One dataset registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetEntry {
    /// Built-in rule set the entry starts from.
    pub preset: String,
    pub input: Option<PathBuf>,
    pub schema: Option<SchemaAdapter>,
}

impl Default for DatasetEntry {
    fn default() -> Self {
        DatasetEntry {
            preset: "canonical".into(),
            input: None,
            schema: None,
        }
    }
}

/// Per-dataset extraction rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPreset {
    pub criteria: ExtractionCriteria,
    pub resample_dt_s: Option<f64>,
    pub schema: SchemaAdapter,
}

/// Built-in presets: highway drone data is resampled to 10 Hz, and the
/// highway and AV fleet sets drop low-speed events.
pub fn preset(name: &str) -> Result<DatasetPreset> {
    let plain = DatasetPreset {
        criteria: ExtractionCriteria::default(),
        resample_dt_s: None,
        schema: SchemaAdapter::canonical(),
    };
    Ok(match name {
        "canonical" | "waymo" | "spmd" => plain,
        "ngsim" => DatasetPreset {
            schema: SchemaAdapter {
                no_leader_value: Some(0),
                ..SchemaAdapter::canonical()
            },
            ..plain
        },
        "highd" => DatasetPreset {
            criteria: ExtractionCriteria::with_low_speed_filter(),
            resample_dt_s: Some(CANONICAL_DT_S),
            ..plain
        },
        "lyft" => DatasetPreset {
            criteria: ExtractionCriteria::with_low_speed_filter(),
            ..plain
        },
        other => {
            return Err(Error::Config(format!(
                "unknown dataset preset `{other}` (expected canonical, ngsim, highd, lyft, waymo or spmd)"
            )))
        }
    })
}

/// Merged view of every module's settings for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Copied into every module seed.
    pub seed: u64,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub synth: SynthSection,
    pub extract: ExtractSection,
    pub calibrate: CalibrateSection,
    pub train_nn: TrainNnSection,
    pub train_rnn: TrainRnnSection,
    pub train_ddpg: TrainDdpgSection,
    pub benchmark: BenchmarkSection,
    pub datasets: BTreeMap<String, DatasetEntry>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Pushes the run seed into every module that draws random numbers.
    pub fn propagate_seed(&mut self) {
        self.calibrate.ga.seed = self.seed;
        self.train_nn.adam.seed = self.seed;
        self.train_rnn.adam.seed = self.seed;
        self.train_ddpg.ddpg.seed = self.seed;
    }

    /// Registry entry for `name`, falling back to the built-in preset of that name.
    pub fn dataset(&self, name: &str) -> Result<(DatasetEntry, DatasetPreset)> {
        let entry = self.datasets.get(name).cloned().unwrap_or_else(|| DatasetEntry {
            preset: name.to_string(),
            ..DatasetEntry::default()
        });
        let mut p = preset(&entry.preset)?;
        if let Some(schema) = &entry.schema {
            p.schema = schema.clone();
        }
        let x = &self.extract;
        if let Some(v) = x.min_duration_s {
            p.criteria.min_duration_s = v;
        }
        if let Some(v) = x.max_lateral_gap_m {
            p.criteria.max_lateral_gap_m = v;
        }
        match x.low_speed_filter {
            Some(true) if !p.criteria.filters_low_speed() => {
                p.criteria = ExtractionCriteria {
                    min_duration_s: p.criteria.min_duration_s,
                    max_lateral_gap_m: p.criteria.max_lateral_gap_m,
                    ..ExtractionCriteria::with_low_speed_filter()
                }
            }
            Some(false) => {
                p.criteria.min_avg_speed_mps = None;
                p.criteria.low_speed_threshold_mps = None;
                p.criteria.low_speed_max_duration_s = None;
            }
            _ => {}
        }
        Ok((entry, p))
    }

    /// Checks every section, independent of which command runs.
    pub fn validate(&self) -> Result<()> {
        reject_unknown("synth", &self.synth.extra)?;
        reject_unknown("extract", &self.extract.extra)?;
        reject_unknown("calibrate", &self.calibrate.extra)?;
        reject_unknown("train_nn", &self.train_nn.extra)?;
        reject_unknown("train_rnn", &self.train_rnn.extra)?;
        reject_unknown("train_ddpg", &self.train_ddpg.extra)?;
        reject_unknown("benchmark", &self.benchmark.extra)?;
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        let s = &self.synth;
        crate::synth::LeaderProfile::from_name(&s.profile).map_err(|e| Error::Config(e.to_string()))?;
        if s.n == 0 || !(s.duration_s > 0.0) || !(s.noise_std_mps2 >= 0.0) || !(s.gap_factor > 0.0) {
            return Err(Error::Config(
                "synth needs n ≥ 1, positive duration and gap factor, non-negative noise".into(),
            ));
        }
        let x = &self.extract;
        crate::traj::SavitzkyGolay::new(x.window, x.polyorder, crate::traj::EdgeMode::Interp)
            .map_err(|e| Error::Config(format!("[extract] smoothing: {e}")))?;
        let (_, p) = self.dataset(&x.dataset)?;
        p.criteria.validate().map_err(|e| Error::Config(e.to_string()))?;
        for name in self.datasets.keys() {
            self.dataset(name)?;
        }
        let c = &self.calibrate;
        c.ga.validate()?;
        let b = c.bounds()?;
        if b.dim() != c.family.gene_names().len() {
            return Err(Error::Config(format!(
                "[calibrate] {:?} needs {} bounds",
                c.family,
                c.family.gene_names().len()
            )));
        }
        self.train_nn.net.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_nn.adam.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_rnn.net.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_rnn.adam.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_ddpg.ddpg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}
