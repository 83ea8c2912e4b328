//! Spacing error and collision metrics, and the multi-model benchmark report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::events::store::write_json;
use crate::events::CarFollowingEvent;
use crate::policy::ModelHandle;
use crate::sim::{rollout, RolloutResult};

/// Mean squared difference between simulated and observed spacing.
pub fn mse_spacing(sim: &[f64], obs: &[f64]) -> Result<f64> {
    if sim.len() != obs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} simulated vs {} observed spacings",
            sim.len(),
            obs.len()
        )));
    }
    if sim.is_empty() {
        return Err(Error::Empty("spacing series"));
    }
    Ok(sim.iter().zip(obs).map(|(s, o)| (s - o).powi(2)).sum::<f64>() / sim.len() as f64)
}

/// Spacing MSE of a rollout over the steps it completed.
pub fn rollout_mse(result: &RolloutResult, event: &CarFollowingEvent) -> Result<f64> {
    let n = result.spacing_sim_m.len();
    if n > event.len() {
        return Err(Error::ShapeMismatch("rollout longer than its event".into()));
    }
    mse_spacing(&result.spacing_sim_m, &event.spacing()[..n])
}

/// Collisions per thousand events.
pub fn collision_rate(collision_count: usize, events: usize) -> Result<f64> {
    if events == 0 {
        return Err(Error::InvalidArgument("collision rate over zero events".into()));
    }
    if collision_count > events {
        return Err(Error::InvalidArgument(format!(
            "{collision_count} collisions among {events} events"
        )));
    }
    Ok(1000.0 * collision_count as f64 / events as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    /// Collided events contribute the MSE of their completed steps.
    #[default]
    Truncate,
    /// Collided events are left out of the MSE but still counted.
    Skip,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub policy_on_collision: CollisionPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_name: String,
    pub dataset_id: String,
    /// Mean of per-event MSEs; `None` when no event contributed.
    pub mse_spacing_m2: Option<f64>,
    pub collision_rate_permille: f64,
    pub collision_count: usize,
    pub events_evaluated: usize,
    /// Collided events whose MSE covers only the steps before the collision.
    pub truncated_events: usize,
    /// Events abandoned because the model produced a non-finite acceleration.
    pub failed_events: usize,
    pub config_hash: String,
}

/// Rolls `model` out on every event and aggregates the two metrics.
pub fn evaluate_model(
    model_name: &str,
    model: &ModelHandle,
    dataset_id: &str,
    events: &[CarFollowingEvent],
    cfg: &BenchConfig,
) -> Result<ReportRow> {
    if events.is_empty() {
        return Err(Error::Empty("test events"));
    }
    let outcomes: Vec<Result<Option<(f64, bool)>>> = events
        .par_iter()
        .map(|e| match rollout(model, e) {
            Ok(r) => Ok(Some((rollout_mse(&r, e)?, r.collided))),
            Err(Error::NonFiniteAccel { step }) => {
                log::warn!("{model_name}: non-finite acceleration on {} at step {step}", e.event_id);
                Ok(None)
            }
            Err(other) => Err(other),
        })
        .collect();

    let (mut mse_sum, mut mse_n) = (0.0, 0usize);
    let (mut collisions, mut evaluated, mut truncated, mut failed) = (0, 0, 0, 0);
    for outcome in outcomes {
        match outcome? {
            None => failed += 1,
            Some((mse, collided)) => {
                evaluated += 1;
                if collided {
                    collisions += 1;
                }
                if collided && cfg.policy_on_collision == CollisionPolicy::Skip {
                    continue;
                }
                if collided {
                    truncated += 1;
                }
                mse_sum += mse;
                mse_n += 1;
            }
        }
    }
    Ok(ReportRow {
        model_name: model_name.to_string(),
        dataset_id: dataset_id.to_string(),
        mse_spacing_m2: (mse_n > 0).then(|| mse_sum / mse_n as f64),
        collision_rate_permille: if evaluated > 0 {
            collision_rate(collisions, evaluated)?
        } else {
            0.0
        },
        collision_count: collisions,
        events_evaluated: evaluated,
        truncated_events: truncated,
        failed_events: failed,
        config_hash: String::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
}

/// One test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub events: Vec<CarFollowingEvent>,
}

fn config_hash(models: &[(String, ModelHandle)], datasets: &[Dataset], cfg: &BenchConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    for (name, m) in models {
        h.update(name.as_bytes());
        h.update(serde_json::to_vec(m)?);
    }
    for d in datasets {
        h.update(d.id.as_bytes());
        for e in &d.events {
            h.update(e.event_id.as_bytes());
        }
    }
    Ok(hex::encode(&h.finalize()[..8]))
}

/// Evaluates every model on every dataset, rows ordered model-major.
pub fn run_benchmark(
    models: &[(String, ModelHandle)],
    datasets: &[Dataset],
    cfg: &BenchConfig,
) -> Result<BenchmarkReport> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to benchmark".into()));
    }
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("no test datasets".into()));
    }
    let hash = config_hash(models, datasets, cfg)?;
    let mut rows = Vec::new();
    for (name, model) in models {
        for d in datasets {
            let mut row = evaluate_model(name, model, &d.id, &d.events, cfg)?;
            row.config_hash = hash.clone();
            rows.push(row);
        }
    }
    Ok(BenchmarkReport {
        config: cfg.clone(),
        config_hash: hash,
        rows,
    })
}

fn fmt_mse(v: Option<f64>) -> String {
    v.map(|m| format!("{m:.2}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_rate(row: &ReportRow) -> String {
    format!("{:.2} ({})", row.collision_rate_permille, row.collision_count)
}

impl BenchmarkReport {
    pub fn any_failures(&self) -> bool {
        self.rows.iter().any(|r| r.failed_events > 0)
    }

    fn order<'a>(&'a self, pick: impl Fn(&'a ReportRow) -> &'a str) -> Vec<&'a str> {
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            let k = pick(r);
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        seen
    }

    /// Models as rows, an MSE block and a collision block with one column per dataset.
    pub fn to_markdown(&self) -> String {
        let models = self.order(|r| r.model_name.as_str());
        let datasets = self.order(|r| r.dataset_id.as_str());
        let cell = |m: &str, d: &str| self.rows.iter().find(|r| r.model_name == m && r.dataset_id == d);

        let mut table: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Model".to_string()];
        header.extend(datasets.iter().map(|d| format!("MSE {d}")));
        header.extend(datasets.iter().map(|d| format!("Collision {d}")));
        table.push(header);
        for m in &models {
            let mut line = vec![m.to_string()];
            line.extend(datasets.iter().map(|d| cell(m, d).map(|r| fmt_mse(r.mse_spacing_m2)).unwrap_or_default()));
            line.extend(datasets.iter().map(|d| cell(m, d).map(fmt_rate).unwrap_or_default()));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(3).max(3))
            .collect();

        let mut out = String::new();
        out.push_str("# Model Benchmark Performance\n\n");
        out.push_str("MSE of spacing (m²) and Collison rate ‰ (Number of Collision)\n\n");
        let render = |out: &mut String, row: &[String]| {
            out.push('|');
            for (c, (text, w)) in row.iter().zip(&widths).enumerate() {
                let pad = w - text.chars().count();
                if c == 0 {
                    let _ = write!(out, " {text}{} |", " ".repeat(pad));
                } else {
                    let _ = write!(out, " {}{text} |", " ".repeat(pad));
                }
            }
            out.push('\n');
        };
        render(&mut out, &table[0]);
        out.push('|');
        for (c, w) in widths.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, " {} |", "-".repeat(*w));
            } else {
                let _ = write!(out, " {}: |", "-".repeat(w - 1));
            }
        }
        out.push('\n');
        for row in &table[1..] {
            render(&mut out, row);
        }
        let _ = write!(out, "\nconfig hash: `{}`\n", self.config_hash);
        out
    }

    /// Writes `report.json` and `report.md` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        write_json(&json, self)?;
        let md = dir.join("report.md");
        std::fs::write(&md, self.to_markdown()).map_err(|e| Error::io(&md, e))?;
        Ok((json, md))
    }
}
