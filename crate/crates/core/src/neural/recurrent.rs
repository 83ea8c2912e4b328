use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Dense;
use super::Params;
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One gated recurrent layer. Gate blocks are stacked in the order
/// input, forget, candidate, output; each weight matrix is row-major `4H × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: Vec<f64>,
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmLayer {
            input_size,
            hidden_size,
            w_input: vec![0.0; 4 * hidden_size * input_size],
            w_hidden: vec![0.0; 4 * hidden_size * hidden_size],
            bias: vec![0.0; 4 * hidden_size],
        }
    }

    /// Uniform `±1/√H` weights with the forget-gate bias set to 1.
    pub fn random<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden_size as f64).sqrt();
        let mut layer = Self::zeros(input_size, hidden_size);
        for w in layer.w_input.iter_mut().chain(&mut layer.w_hidden) {
            *w = rng.random_range(-k..k);
        }
        layer.bias[hidden_size..2 * hidden_size].fill(1.0);
        layer
    }
}

#[derive(Debug, Clone, Default)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`, each of length H.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct LayerCache {
    steps: Vec<StepCache>,
    /// Inverted-dropout mask applied to this layer's output sequence.
    mask: Option<Vec<f64>>,
}

/// Stacked recurrent layers with a linear head on the final hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentNet {
    pub layers: Vec<LstmLayer>,
    pub head: Dense,
    pub dropout_prob: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RecurrentCache {
    layers: Vec<LayerCache>,
    head_input: Vec<f64>,
    output: f64,
}

impl RecurrentCache {
    pub fn output(&self) -> f64 {
        self.output
    }
}

impl RecurrentNet {
    pub fn zeros(input_size: usize, hidden_size: usize, num_layers: usize, dropout_prob: f64) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 || num_layers == 0 {
            return Err(Error::ShapeMismatch("recurrent sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_prob) {
            return Err(Error::InvalidArgument(format!("dropout {dropout_prob} outside [0, 1)")));
        }
        Ok(RecurrentNet {
            layers: (0..num_layers)
                .map(|l| LstmLayer::zeros(if l == 0 { input_size } else { hidden_size }, hidden_size))
                .collect(),
            head: Dense::zeros(hidden_size, 1),
            dropout_prob,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        dropout_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_size, hidden_size, num_layers, dropout_prob)?;
        for layer in &mut net.layers {
            *layer = LstmLayer::random(layer.input_size, layer.hidden_size, rng);
        }
        net.head = Dense::glorot(hidden_size, 1, rng);
        Ok(net)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn zeros_like(&self) -> RecurrentNet {
        RecurrentNet {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer::zeros(l.input_size, l.hidden_size))
                .collect(),
            head: Dense::zeros(self.head.inputs, 1),
            dropout_prob: self.dropout_prob,
        }
    }

    fn dropout_mask<R: Rng + ?Sized>(&self, n: usize, rng: Option<&mut R>) -> Option<Vec<f64>> {
        let rng = rng?;
        if self.dropout_prob == 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout_prob;
        Some(
            (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        )
    }

    /// Runs the window through the net. Passing an rng enables training-mode
    /// dropout; `None` is evaluation mode.
    pub fn forward_cached<R: Rng + ?Sized>(&self, window: &[f64], mut rng: Option<&mut R>) -> Result<RecurrentCache> {
        let f = self.input_size();
        if window.is_empty() || !window.len().is_multiple_of(f) {
            return Err(Error::ShapeMismatch(format!(
                "window of {} values is not a whole number of {f}-feature steps",
                window.len()
            )));
        }
        let steps = window.len() / f;
        let mut seq: Vec<Vec<f64>> = window.chunks(f).map(<[f64]>::to_vec).collect();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h_n = layer.hidden_size;
            let mut h = vec![0.0; h_n];
            let mut c = vec![0.0; h_n];
            let mut cache = LayerCache::default();
            let mut outputs = Vec::with_capacity(steps);
            for x in seq {
                let mut z = layer.bias.clone();
                for (r, zr) in z.iter_mut().enumerate() {
                    let wi = &layer.w_input[r * layer.input_size..(r + 1) * layer.input_size];
                    let wh = &layer.w_hidden[r * h_n..(r + 1) * h_n];
                    *zr += wi.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                        + wh.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
                }
                let mut gates = z;
                for (k, gv) in gates.iter_mut().enumerate() {
                    *gv = if (2 * h_n..3 * h_n).contains(&k) { gv.tanh() } else { sigmoid(*gv) };
                }
                let (i, rest) = gates.split_at(h_n);
                let (fg, rest) = rest.split_at(h_n);
                let (g, o) = rest.split_at(h_n);
                let c_new: Vec<f64> = (0..h_n).map(|j| fg[j] * c[j] + i[j] * g[j]).collect();
                let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
                let h_new: Vec<f64> = (0..h_n).map(|j| o[j] * tanh_c[j]).collect();
                cache.steps.push(StepCache {
                    x,
                    h_prev: std::mem::replace(&mut h, h_new),
                    c_prev: std::mem::replace(&mut c, c_new),
                    gates,
                    tanh_c,
                });
                outputs.push(h.clone());
            }
            cache.mask = self.dropout_mask(h_n, rng.as_deref_mut());
            if let Some(mask) = &cache.mask {
                for out in &mut outputs {
                    out.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                }
            }
            seq = outputs;
            layers.push(cache);
        }
        let head_input = seq.pop().expect("window has at least one step");
        let mut y = Vec::new();
        self.head.forward_into(&head_input, &mut y);
        Ok(RecurrentCache {
            layers,
            head_input,
            output: y[0],
        })
    }

    pub fn forward(&self, window: &[f64]) -> Result<f64> {
        Ok(self.forward_cached::<rand_chacha::ChaCha8Rng>(window, None)?.output)
    }

    /// Backpropagation through time for a scalar output gradient.
    pub fn backward(&self, cache: &RecurrentCache, d_out: f64, grads: &mut RecurrentNet) {
        let mut dx_head = Vec::new();
        self.head
            .backward_into(&cache.head_input, &[d_out], &mut grads.head, &mut dx_head);
        let steps = cache.layers[0].steps.len();
        let top_h = self.hidden_size();
        let mut d_seq = vec![vec![0.0; top_h]; steps];
        d_seq[steps - 1] = dx_head;

        for (li, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            let g = &mut grads.layers[li];
            if let Some(mask) = &lc.mask {
                for d in &mut d_seq {
                    d.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                }
            }
            let h_n = layer.hidden_size;
            let n_in = layer.input_size;
            let mut dh_next = vec![0.0; h_n];
            let mut dc_next = vec![0.0; h_n];
            let mut d_inputs = vec![vec![0.0; n_in]; steps];
            let mut dz = vec![0.0; 4 * h_n];
            for t in (0..steps).rev() {
                let s = &lc.steps[t];
                let (i, rest) = s.gates.split_at(h_n);
                let (f, rest) = rest.split_at(h_n);
                let (gg, o) = rest.split_at(h_n);
                for j in 0..h_n {
                    let dh = d_seq[t][j] + dh_next[j];
                    let tc = s.tanh_c[j];
                    let dc = dh * o[j] * (1.0 - tc * tc) + dc_next[j];
                    dz[j] = dc * gg[j] * i[j] * (1.0 - i[j]);
                    dz[h_n + j] = dc * s.c_prev[j] * f[j] * (1.0 - f[j]);
                    dz[2 * h_n + j] = dc * i[j] * (1.0 - gg[j] * gg[j]);
                    dz[3 * h_n + j] = dh * tc * o[j] * (1.0 - o[j]);
                    dc_next[j] = dc * f[j];
                }
                dh_next.fill(0.0);
                let dx = &mut d_inputs[t];
                for (r, dzr) in dz.iter().enumerate() {
                    if *dzr == 0.0 {
                        continue;
                    }
                    g.bias[r] += dzr;
                    let wi = r * n_in..(r + 1) * n_in;
                    for ((gw, w), (xv, dxv)) in g.w_input[wi.clone()]
                        .iter_mut()
                        .zip(&layer.w_input[wi])
                        .zip(s.x.iter().zip(dx.iter_mut()))
                    {
                        *gw += dzr * xv;
                        *dxv += dzr * w;
                    }
                    let wh = r * h_n..(r + 1) * h_n;
                    for ((gw, w), (hv, dhv)) in g.w_hidden[wh.clone()]
                        .iter_mut()
                        .zip(&layer.w_hidden[wh])
                        .zip(s.h_prev.iter().zip(dh_next.iter_mut()))
                    {
                        *gw += dzr * hv;
                        *dhv += dzr * w;
                    }
                }
            }
            d_seq = d_inputs;
        }
    }
}

impl Params for RecurrentNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.extend([l.w_input.as_slice(), l.w_hidden.as_slice(), l.bias.as_slice()]);
        }
        out.extend([self.head.weight.as_slice(), self.head.bias.as_slice()]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.extend([l.w_input.as_mut_slice(), l.w_hidden.as_mut_slice(), l.bias.as_mut_slice()]);
        }
        out.extend([self.head.weight.as_mut_slice(), self.head.bias.as_mut_slice()]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::test_support::{check_gradients, numeric_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss_grad(net: &RecurrentNet, windows: &[Vec<f64>], targets: &[f64], seed: Option<u64>) -> (f64, RecurrentNet) {
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let mut g = net.zeros_like();
        let n = windows.len() as f64;
        let mut loss = 0.0;
        for (w, t) in windows.iter().zip(targets) {
            let cache = net.forward_cached(w, rng.as_mut()).unwrap();
            let r = cache.output() - t;
            loss += r * r / n;
            net.backward(&cache, 2.0 * r / n, &mut g);
        }
        (loss, g)
    }

    #[test]
    fn zero_net_gives_zero_everywhere() {
        let net = RecurrentNet::zeros(3, 4, 1, 0.0).unwrap();
        let cache = net
            .forward_cached::<ChaCha8Rng>(&[1.0, -2.0, 0.5, 3.0, 3.0, 3.0], None)
            .unwrap();
        let step = &cache.layers[0].steps[1];
        assert!(step.gates[..4].iter().all(|v| *v == 0.5));
        assert!(step.gates[8..12].iter().all(|v| *v == 0.0));
        assert!(step.gates[12..].iter().all(|v| *v == 0.5));
        assert!(step.tanh_c.iter().all(|v| *v == 0.0));
        assert_eq!(cache.output(), 0.0);
    }

    #[test]
    fn zero_input_weights_ignore_window_content() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = RecurrentNet::random(3, 5, 1, 0.0, &mut rng).unwrap();
        net.layers[0].w_input.fill(0.0);
        let a = net.forward(&[1.0; 30]).unwrap();
        let b = net.forward(&(0..30).map(|i| i as f64 * 0.3 - 4.0).collect::<Vec<_>>()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_is_seeded_and_off_in_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = RecurrentNet::random(3, 8, 2, 0.5, &mut rng).unwrap();
        let w: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let run = |s| {
            net.forward_cached(&w, Some(&mut ChaCha8Rng::seed_from_u64(s)))
                .unwrap()
                .output()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert_eq!(net.forward(&w).unwrap(), net.forward(&w).unwrap());
        assert!(net.forward_cached::<ChaCha8Rng>(&w, None).unwrap().layers.iter().all(|l| l.mask.is_none()));
    }

    #[test]
    fn ragged_window_rejected() {
        let net = RecurrentNet::zeros(3, 4, 1, 0.0).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (layers, dropout, seed) in [(1, 0.0, None), (2, 0.0, None), (2, 0.3, Some(5))] {
            let net = RecurrentNet::random(3, 4, layers, dropout, &mut rng).unwrap();
            let windows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..15).map(|_| rng.random_range(-1.5..1.5)).collect())
                .collect();
            let targets = [0.4, -0.7, 1.1];
            let (_, analytic) = loss_grad(&net, &windows, &targets, seed);
            let numeric = numeric_grad(&net, 1e-5, |n| loss_grad(n, &windows, &targets, seed).0);
            check_gradients(&analytic, &numeric, 1e-4);
        }
    }
}
