use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, features, mlp_mse_grad, AdamConfig, AdamState, Mlp, MlpModel, Normalizer, OutputActivation, Params,
    RecurrentModel, RecurrentNet, N_FEATURES,
};
use crate::error::{Error, Result};
use crate::events::CarFollowingEvent;
use crate::models::Observation;
use crate::policy::ModelHandle;
use crate::sim::derived_accel_targets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            layer_sizes: vec![N_FEATURES, 64, 64, 1],
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        if s.len() < 3 || s[0] != N_FEATURES || s[s.len() - 1] != 1 || s.contains(&0) {
            return Err(Error::Config(format!(
                "layer_sizes {s:?} must start at {N_FEATURES}, end at 1 and have a hidden layer"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecurrentSpec {
    pub window_steps: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout_prob: f64,
}

impl Default for RecurrentSpec {
    fn default() -> Self {
        RecurrentSpec {
            window_steps: 10,
            hidden_size: 64,
            num_layers: 1,
            dropout_prob: 0.1,
        }
    }
}

impl RecurrentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_steps == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::Config("window_steps, hidden_size and num_layers must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!("dropout_prob {} outside [0, 1)", self.dropout_prob)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "net", rename_all = "snake_case")]
pub enum NetSpec {
    Mlp(MlpSpec),
    Recurrent(RecurrentSpec),
}

/// Regression inputs (one flat row each) and scalar targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn normalized(mut self, norm: &Normalizer) -> Self {
        for x in &mut self.inputs {
            *x = norm.normalize(x);
        }
        self
    }
}

fn observation(event: &CarFollowingEvent, t: usize) -> Observation {
    Observation::new(event.spacing()[t], event.v_fv()[t], event.v_lv()[t])
}

/// One sample per step with a derived acceleration target.
pub fn mlp_samples(events: &[CarFollowingEvent]) -> Samples {
    let mut s = Samples::default();
    for e in events {
        for (t, a) in derived_accel_targets(e).into_iter().enumerate() {
            s.inputs.push(features(&observation(e, t)).to_vec());
            s.targets.push(a);
        }
    }
    s
}

/// Windows of `window` steps ending at each step, padded at the start with
/// the first observation the way a rollout pads its history.
pub fn recurrent_samples(events: &[CarFollowingEvent], window: usize) -> Samples {
    let mut s = Samples::default();
    for e in events {
        for (t, a) in derived_accel_targets(e).into_iter().enumerate() {
            let row = (0..window)
                .flat_map(|k| {
                    let idx = (t + k + 1).saturating_sub(window);
                    features(&observation(e, idx))
                })
                .collect();
            s.inputs.push(row);
            s.targets.push(a);
        }
    }
    s
}

/// A network trainable by [`fit`].
pub trait Regressor: Params + Clone {
    /// Training-mode mean squared error and its gradient over a batch.
    fn loss_grad(&self, inputs: &[&[f64]], targets: &[f64], rng: &mut ChaCha8Rng) -> Result<(f64, Self)>;

    /// Evaluation-mode prediction.
    fn predict(&self, input: &[f64]) -> Result<f64>;
}

impl Regressor for Mlp {
    fn loss_grad(&self, inputs: &[&[f64]], targets: &[f64], _rng: &mut ChaCha8Rng) -> Result<(f64, Self)> {
        mlp_mse_grad(self, inputs, targets)
    }

    fn predict(&self, input: &[f64]) -> Result<f64> {
        Ok(self.forward(input)?[0])
    }
}

impl Regressor for RecurrentNet {
    fn loss_grad(&self, inputs: &[&[f64]], targets: &[f64], rng: &mut ChaCha8Rng) -> Result<(f64, Self)> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = inputs.len() as f64;
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            let cache = self.forward_cached(x, Some(&mut *rng))?;
            let r = cache.output() - t;
            loss += r * r;
            self.backward(&cache, 2.0 * r / n, &mut grads);
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
        Ok((loss, grads))
    }

    fn predict(&self, input: &[f64]) -> Result<f64> {
        self.forward(input)
    }
}

/// Loss curves of a supervised run, one entry per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch (0-based) whose weights were kept.
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            w.write_record([e.to_string(), t.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

fn mean_sq_error<R: Regressor>(model: &R, samples: &Samples) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in samples.inputs.iter().zip(&samples.targets) {
        let r = model.predict(x)? - t;
        total += r * r;
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch Adam on mean squared error; returns the weights with the
/// lowest validation loss.
pub fn fit<R: Regressor>(mut model: R, train: &Samples, val: &Samples, cfg: &AdamConfig) -> Result<(R, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training or validation samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train.inputs[i].as_slice()).collect();
            let ts: Vec<f64> = batch.iter().map(|&i| train.targets[i]).collect();
            let (loss, grads) = model
                .loss_grad(&xs, &ts, &mut rng)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
            adam_step(&mut model, &grads, &mut state, cfg)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let val_loss = mean_sq_error(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("epoch {epoch}: validation loss {val_loss}")));
        }
        log::debug!("epoch {epoch}: train {:.6} val {val_loss:.6}", epoch_loss / train.len() as f64);
        report.train_loss.push(epoch_loss / train.len() as f64);
        report.val_loss.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            report.best_epoch = epoch;
        }
    }
    Ok((best, report))
}

/// Fits a network to derived accelerations of `train_events`.
pub fn train_supervised(
    spec: &NetSpec,
    train_events: &[CarFollowingEvent],
    val_events: &[CarFollowingEvent],
    cfg: &AdamConfig,
) -> Result<(ModelHandle, TrainReport)> {
    if train_events.is_empty() || val_events.is_empty() {
        return Err(Error::Empty("training or validation events"));
    }
    let step_rows = mlp_samples(train_events);
    let normalizer = Normalizer::fit(step_rows.inputs.iter().map(Vec::as_slice))?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match spec {
        NetSpec::Mlp(s) => {
            s.validate()?;
            let net = Mlp::random(&s.layer_sizes, OutputActivation::Linear, &mut init_rng)?;
            let train = step_rows.normalized(&normalizer);
            let val = mlp_samples(val_events).normalized(&normalizer);
            let (net, report) = fit(net, &train, &val, cfg)?;
            Ok((ModelHandle::Mlp(MlpModel::new(net, normalizer)?), report))
        }
        NetSpec::Recurrent(s) => {
            s.validate()?;
            let net = RecurrentNet::random(N_FEATURES, s.hidden_size, s.num_layers, s.dropout_prob, &mut init_rng)?;
            let train = recurrent_samples(train_events, s.window_steps).normalized(&normalizer);
            let val = recurrent_samples(val_events, s.window_steps).normalized(&normalizer);
            let (net, report) = fit(net, &train, &val, cfg)?;
            Ok((
                ModelHandle::Recurrent(RecurrentModel::new(net, s.window_steps, normalizer)?),
                report,
            ))
        }
    }
}
