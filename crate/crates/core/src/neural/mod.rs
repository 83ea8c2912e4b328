//! Dense and gated-recurrent acceleration regressors with hand-written
//! backward passes, an Adam optimizer, and a JSON weight format.

mod adam;
mod mlp;
mod recurrent;
mod train;
mod weights;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{mlp_mse_grad, Dense, Mlp, MlpCache, OutputActivation};
pub use recurrent::{LstmLayer, RecurrentCache, RecurrentNet};
pub use train::{
    fit, mlp_samples, recurrent_samples, train_supervised, MlpSpec, NetSpec, RecurrentSpec, Regressor, Samples,
    TrainReport,
};
pub use weights::{Tensor, WeightDoc, WEIGHT_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::models::{CFState, Observation};
use crate::policy::AccelPolicy;

/// Flat views of every parameter tensor, in a fixed order.
pub trait Params {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

/// Number of per-step input features: spacing, follower speed, relative speed.
pub const N_FEATURES: usize = 3;

pub fn features(obs: &Observation) -> [f64; N_FEATURES] {
    [obs.spacing_m, obs.v_fv_mps, obs.dv_mps]
}

/// Per-feature z-scoring fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub const MIN_STD: f64 = 1e-9;

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for row in rows {
            if sum.is_empty() {
                sum = vec![0.0; row.len()];
                sq = vec![0.0; row.len()];
            }
            if row.len() != sum.len() {
                return Err(Error::ShapeMismatch("rows differ in feature count".into()));
            }
            for (j, x) in row.iter().enumerate() {
                sum[j] += x;
                sq[j] += x * x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("normalizer rows"));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / nf - m * m).max(0.0).sqrt())
            .collect();
        let norm = Normalizer { mean, std };
        norm.validate()?;
        Ok(norm)
    }

    pub fn identity(n: usize) -> Self {
        Normalizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::ShapeMismatch("normalizer mean and std differ in length".into()));
        }
        if let Some(j) = self.std.iter().position(|s| !(*s >= Self::MIN_STD)) {
            return Err(Error::InvalidArgument(format!(
                "feature {j} has standard deviation {} on the training split",
                self.std[j]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Normalizes a row, or a window of rows laid end to end.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        x.iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k % n]) / self.std[k % n])
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        let n = self.len();
        z.iter()
            .enumerate()
            .map(|(k, v)| v * self.std[k % n] + self.mean[k % n])
            .collect()
    }
}

/// Feed-forward regressor on the current step's features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "WeightDoc", try_from = "WeightDoc")]
pub struct MlpModel {
    pub net: Mlp,
    pub normalizer: Normalizer,
}

impl MlpModel {
    pub fn new(net: Mlp, normalizer: Normalizer) -> Result<Self> {
        if net.input_size() != normalizer.len() || net.output_size() != 1 {
            return Err(Error::ShapeMismatch("network and normalizer disagree".into()));
        }
        normalizer.validate()?;
        Ok(MlpModel { net, normalizer })
    }
}

impl AccelPolicy for MlpModel {
    fn accel(&self, state: &CFState) -> Result<f64> {
        let x = self.normalizer.normalize(&features(state.current()));
        Ok(self.net.forward(&x)?[0])
    }
}

/// Recurrent regressor over the last `window_steps` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "WeightDoc", try_from = "WeightDoc")]
pub struct RecurrentModel {
    pub net: RecurrentNet,
    pub window_steps: usize,
    pub normalizer: Normalizer,
}

impl RecurrentModel {
    pub fn new(net: RecurrentNet, window_steps: usize, normalizer: Normalizer) -> Result<Self> {
        if window_steps == 0 || net.input_size() != normalizer.len() {
            return Err(Error::ShapeMismatch("recurrent model window or features invalid".into()));
        }
        normalizer.validate()?;
        Ok(RecurrentModel {
            net,
            window_steps,
            normalizer,
        })
    }
}

impl AccelPolicy for RecurrentModel {
    fn accel(&self, state: &CFState) -> Result<f64> {
        let window = state.window(self.window_steps).ok_or(Error::InsufficientHistory {
            needed: self.window_steps,
            available: state.depth() + 1,
        })?;
        let raw: Vec<f64> = window.flat_map(features).collect();
        self.net.forward(&self.normalizer.normalize(&raw))
    }

    fn history_depth(&self) -> usize {
        self.window_steps - 1
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::Params;

    /// Central-difference gradient of `loss` with respect to every parameter.
    pub fn numeric_grad<P: Params + Clone>(params: &P, h: f64, loss: impl Fn(&P) -> f64) -> Vec<Vec<f64>> {
        let mut probe = params.clone();
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        let mut out = Vec::new();
        for (ti, len) in shapes.into_iter().enumerate() {
            let mut g = vec![0.0; len];
            for (k, gk) in g.iter_mut().enumerate() {
                let orig = probe.tensors()[ti][k];
                probe.tensors_mut()[ti][k] = orig + h;
                let up = loss(&probe);
                probe.tensors_mut()[ti][k] = orig - h;
                let down = loss(&probe);
                probe.tensors_mut()[ti][k] = orig;
                *gk = (up - down) / (2.0 * h);
            }
            out.push(g);
        }
        out
    }

    /// Largest relative error between analytic and numeric gradients, with
    /// near-zero pairs compared absolutely.
    pub fn max_relative_error<P: Params>(analytic: &P, numeric: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, n) in analytic.tensors().iter().zip(numeric) {
            assert_eq!(a.len(), n.len());
            for (x, y) in a.iter().zip(n) {
                let scale = x.abs().max(y.abs());
                let err = if scale < 1e-6 { (x - y).abs() } else { (x - y).abs() / scale };
                worst = worst.max(err);
            }
        }
        worst
    }

    pub fn check_gradients<P: Params>(analytic: &P, numeric: &[Vec<f64>], tol: f64) {
        let err = max_relative_error(analytic, numeric);
        assert!(err < tol, "max relative gradient error {err:e} exceeds {tol:e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_feature_rejected() {
        let rows = [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let err = Normalizer::fit(rows.iter().map(|r| r.as_slice()));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fitted_statistics() {
        let rows = [[1.0, 10.0], [3.0, 30.0]];
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(n.mean, vec![2.0, 20.0]);
        assert_eq!(n.std, vec![1.0, 10.0]);
        assert_eq!(n.normalize(&[3.0, 10.0, 1.0, 30.0]), vec![1.0, -1.0, -1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(
            mean in prop::collection::vec(-50.0f64..50.0, 3),
            std in prop::collection::vec(0.01f64..40.0, 3),
            x in prop::collection::vec(-100.0f64..100.0, 3),
        ) {
            let n = Normalizer { mean, std };
            let back = n.denormalize(&n.normalize(&x));
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
