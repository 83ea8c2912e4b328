use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};

/// Fully connected layer, `y = W x + b` with `W` stored row-major (`out × in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weight {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    pub fn forward_into(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        y.extend(self.bias.iter().enumerate().map(|(r, b)| {
            let row = &self.weight[r * self.inputs..(r + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
        }));
    }

    /// Accumulates parameter gradients into `grad` and writes `∂L/∂x` into `dx`.
    pub fn backward_into(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: &mut Vec<f64>) {
        dx.clear();
        dx.resize(self.inputs, 0.0);
        for (r, g) in dy.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            grad.bias[r] += g;
            let row = r * self.inputs..(r + 1) * self.inputs;
            for ((gw, w), (xi, dxi)) in grad.weight[row.clone()]
                .iter_mut()
                .zip(&self.weight[row])
                .zip(x.iter().zip(dx.iter_mut()))
            {
                *gw += g * xi;
                *dxi += g * w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    /// `scale · tanh(z)`, bounding the output to `±scale`.
    ScaledTanh { scale: f64 },
}

/// Tanh hidden layers with a linear (or bounded) output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Per-layer inputs and outputs kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input; `acts[i + 1]` is the activated output of layer `i`.
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!("layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Mlp {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            output,
        })
    }

    pub fn random<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Mlp {
            layers: sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
            output,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache> {
        if x.len() != self.input_size() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::new();
            layer.forward_into(&acts[i], &mut y);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            } else if let OutputActivation::ScaledTanh { scale } = self.output {
                y.iter_mut().for_each(|v| *v = scale * v.tanh());
            }
            acts.push(y);
        }
        Ok(MlpCache { acts })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.acts.pop().unwrap_or_default())
    }

    /// Backpropagates `∂L/∂output`; accumulates into `grads` and returns `∂L/∂input`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Linear => d_out.to_vec(),
            OutputActivation::ScaledTanh { scale } => d_out
                .iter()
                .zip(&cache.acts[last + 1])
                .map(|(g, y)| {
                    let t = y / scale;
                    g * scale * (1.0 - t * t)
                })
                .collect(),
        };
        let mut dx = Vec::new();
        for i in (0..=last).rev() {
            self.layers[i].backward_into(&cache.acts[i], &delta, &mut grads.layers[i], &mut dx);
            if i > 0 {
                // acts[i] is tanh output of layer i-1.
                delta = dx
                    .iter()
                    .zip(&cache.acts[i])
                    .map(|(g, a)| g * (1.0 - a * a))
                    .collect();
            }
        }
        dx
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            output: self.output,
        }
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

/// Mean squared error of a scalar-output network over a batch and its gradient.
pub fn mlp_mse_grad<X: AsRef<[f64]>>(net: &Mlp, inputs: &[X], targets: &[f64]) -> Result<(f64, Mlp)> {
    if inputs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::ShapeMismatch("inputs and targets differ in length".into()));
    }
    let n = inputs.len() as f64;
    let mut grads = net.zeros_like();
    let mut loss = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let cache = net.forward_cached(x.as_ref())?;
        let r = cache.output()[0] - t;
        loss += r * r;
        net.backward(&cache, &[2.0 * r / n], &mut grads);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite loss {loss}")));
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::test_support::{check_gradients, numeric_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 64, 64, 1], OutputActivation::Linear).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_hidden_unit_by_hand() {
        let mut net = Mlp::zeros(&[3, 1, 1], OutputActivation::Linear).unwrap();
        net.layers[0].weight = vec![0.7, 5.0, -3.0];
        net.layers[1].weight = vec![1.9];
        let y = net.forward(&[1.0, 0.0, 0.0]).unwrap()[0];
        assert!((y - 1.9 * 0.7f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[3, 4, 1], OutputActivation::Linear).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pointwise_over_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(&[3, 8, 8, 1], OutputActivation::Linear, &mut rng).unwrap();
        let xs = [[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0], [0.0, 0.0, 1.0]];
        let fwd: Vec<f64> = xs.iter().map(|x| net.forward(x).unwrap()[0]).collect();
        let rev: Vec<f64> = xs.iter().rev().map(|x| net.forward(x).unwrap()[0]).collect();
        assert_eq!(fwd, rev.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::random(&[3, 5, 1], OutputActivation::Linear, &mut rng).unwrap();
        let xs = vec![vec![0.3, -0.2, 0.9], vec![1.0, 1.0, -1.0]];
        let ts: Vec<f64> = xs.iter().map(|x| net.forward(x).unwrap()[0]).collect();
        let (loss, g) = mlp_mse_grad(&net, &xs, &ts).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for output in [OutputActivation::Linear, OutputActivation::ScaledTanh { scale: 3.0 }] {
            let net = Mlp::random(&[3, 6, 5, 1], output, &mut rng).unwrap();
            let xs: Vec<Vec<f64>> = (0..7)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let ts: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, analytic) = mlp_mse_grad(&net, &xs, &ts).unwrap();
            let numeric = numeric_grad(&net, 1e-5, |n| mlp_mse_grad(n, &xs, &ts).unwrap().0);
            check_gradients(&analytic, &numeric, 1e-4);
        }
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::random(&[3, 4, 1], OutputActivation::Linear, &mut rng).unwrap();
        let xs = vec![vec![0.3, -0.2, 0.9], vec![1.0, 1.0, -1.0]];
        let ts = vec![0.5, -0.25];
        let (l1, g1) = mlp_mse_grad(&net, &xs, &ts).unwrap();
        let xs2: Vec<Vec<f64>> = xs.iter().chain(&xs).cloned().collect();
        let ts2: Vec<f64> = ts.iter().chain(&ts).copied().collect();
        let (l2, g2) = mlp_mse_grad(&net, &xs2, &ts2).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::random(&[4, 6, 1], OutputActivation::Linear, &mut rng).unwrap();
        let x = vec![0.2, -0.4, 1.1, 0.05];
        let cache = net.forward_cached(&x).unwrap();
        let mut scratch = net.zeros_like();
        let dx = net.backward(&cache, &[1.0], &mut scratch);
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }
}
