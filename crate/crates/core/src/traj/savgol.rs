use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the first and last half-window of samples are filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Evaluate the polynomial fitted to the first (last) full window at the
    /// edge positions. Reproduces polynomials of degree ≤ polyorder exactly.
    #[default]
    Interp,
    /// Reflect the series about its end samples (`x[-k] = x[k]`) and apply
    /// the centered kernel everywhere.
    Mirror,
}

/// Precomputed Savitzky–Golay smoothing kernels.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    polyorder: usize,
    edge: EdgeMode,
    /// `weights[j]` evaluates the window fit at offset `j - half` from the center.
    weights: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, polyorder: usize, edge: EdgeMode) -> Result<Self> {
        if window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("window {window} must be odd")));
        }
        if polyorder >= window {
            return Err(Error::InvalidArgument(format!(
                "polyorder {polyorder} must be smaller than window {window}"
            )));
        }
        let half = (window / 2) as f64;
        // Offsets scaled into [-1, 1] to keep the Vandermonde matrix well conditioned.
        let scale = if half > 0.0 { half } else { 1.0 };
        let vander = DMatrix::from_fn(window, polyorder + 1, |r, c| {
            ((r as f64 - half) / scale).powi(c as i32)
        });
        let pinv = vander
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidArgument(format!("savitzky-golay fit: {e}")))?;
        let weights = (0..window)
            .map(|j| {
                let u = (j as f64 - half) / scale;
                let basis = DVector::from_fn(polyorder + 1, |c, _| u.powi(c as i32));
                (basis.transpose() * &pinv).iter().copied().collect()
            })
            .collect();
        Ok(SavitzkyGolay {
            window,
            polyorder,
            edge,
            weights,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn polyorder(&self) -> usize {
        self.polyorder
    }

    pub fn apply(&self, series: &[f64]) -> Result<Vec<f64>> {
        let n = series.len();
        if n < self.window {
            return Err(Error::InvalidArgument(format!(
                "series of length {n} is shorter than window {}",
                self.window
            )));
        }
        let half = self.window / 2;
        let center = &self.weights[half];
        let dot = |w: &[f64], start: usize| -> f64 {
            w.iter().zip(&series[start..start + self.window]).map(|(a, b)| a * b).sum()
        };

        let mut out = vec![0.0; n];
        for i in half..n - half {
            out[i] = dot(center, i - half);
        }
        match self.edge {
            EdgeMode::Interp => {
                for i in 0..half {
                    out[i] = dot(&self.weights[i], 0);
                    let j = n - half + i;
                    out[j] = dot(&self.weights[half + 1 + i], n - self.window);
                }
            }
            EdgeMode::Mirror => {
                let at = |k: isize| -> f64 {
                    let last = n as isize - 1;
                    let idx = if k < 0 {
                        -k
                    } else if k > last {
                        2 * last - k
                    } else {
                        k
                    };
                    series[idx as usize]
                };
                let edge_points = (0..half).chain(n - half..n);
                for i in edge_points {
                    out[i] = center
                        .iter()
                        .enumerate()
                        .map(|(j, w)| w * at(i as isize + j as isize - half as isize))
                        .sum();
                }
            }
        }
        Ok(out)
    }
}

/// Savitzky–Golay smoothing with polynomial-fit edges.
pub fn savitzky_golay(series: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    savitzky_golay_with(series, window, polyorder, EdgeMode::Interp)
}

pub fn savitzky_golay_with(
    series: &[f64],
    window: usize,
    polyorder: usize,
    edge: EdgeMode,
) -> Result<Vec<f64>> {
    SavitzkyGolay::new(window, polyorder, edge)?.apply(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Least-squares polynomial fit by normal equations and Gaussian
    /// elimination, evaluated at `at` (offset from the window start).
    fn lsq_fit_value(window: &[f64], order: usize, at: f64) -> f64 {
        let m = order + 1;
        let mut ata = vec![vec![0.0; m]; m];
        let mut aty = vec![0.0; m];
        let c = (window.len() / 2) as f64;
        for (j, y) in window.iter().enumerate() {
            let x = j as f64 - c;
            for r in 0..m {
                aty[r] += x.powi(r as i32) * y;
                for q in 0..m {
                    ata[r][q] += x.powi((r + q) as i32);
                }
            }
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
                .unwrap();
            ata.swap(col, piv);
            aty.swap(col, piv);
            for r in 0..m {
                if r != col {
                    let f = ata[r][col] / ata[col][col];
                    for q in col..m {
                        ata[r][q] -= f * ata[col][q];
                    }
                    aty[r] -= f * aty[col];
                }
            }
        }
        let coef: Vec<f64> = (0..m).map(|r| aty[r] / ata[r][r]).collect();
        let x = at - c;
        coef.iter().enumerate().map(|(p, a)| a * x.powi(p as i32)).sum()
    }

    fn noisy_sine(n: usize) -> Vec<f64> {
        // deterministic pseudo-noise
        let mut state: u64 = 0x9e3779b97f4a7c15;
        (0..n)
            .map(|i| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let noise = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                (i as f64 * 0.2).sin() + 0.1 * noise
            })
            .collect()
    }

    #[test]
    fn cubic_reproduced_exactly() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.1 - 2.0).collect();
        let x: Vec<f64> = t.iter().map(|t| t * t * t).collect();
        let y = savitzky_golay(&x, 11, 3).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_series_unchanged() {
        let x = vec![3.25; 20];
        for edge in [EdgeMode::Interp, EdgeMode::Mirror] {
            let y = savitzky_golay_with(&x, 11, 3, edge).unwrap();
            for v in y {
                assert!((v - 3.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_per_window_regression() {
        let x = noisy_sine(80);
        let (w, p) = (11, 3);
        let y = savitzky_golay(&x, w, p).unwrap();
        let h = w / 2;
        for i in 0..x.len() {
            let (start, at) = if i < h {
                (0, i as f64)
            } else if i >= x.len() - h {
                (x.len() - w, (i - (x.len() - w)) as f64)
            } else {
                (i - h, h as f64)
            };
            let oracle = lsq_fit_value(&x[start..start + w], p, at);
            assert!((oracle - y[i]).abs() < 1e-9, "i={i}: {oracle} vs {}", y[i]);
        }
    }

    #[test]
    fn mirror_edges_reflect() {
        let x = noisy_sine(40);
        let y = savitzky_golay_with(&x, 5, 2, EdgeMode::Mirror).unwrap();
        let mut padded = vec![x[2], x[1]];
        padded.extend_from_slice(&x);
        let n = x.len();
        padded.extend_from_slice(&[x[n - 2], x[n - 3]]);
        for i in 0..n {
            let oracle = lsq_fit_value(&padded[i..i + 5], 2, 2.0);
            assert!((oracle - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = vec![0.0; 20];
        assert!(savitzky_golay(&x, 10, 3).is_err());
        assert!(savitzky_golay(&x, 5, 5).is_err());
        assert!(savitzky_golay(&x[..7], 11, 3).is_err());
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            xs in prop::collection::vec(-100.0f64..100.0, 15..40),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let ys: Vec<f64> = xs.iter().rev().map(|v| v * 0.5 + 1.0).collect();
            let mixed: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let fx = savitzky_golay(&xs, 11, 3).unwrap();
            let fy = savitzky_golay(&ys, 11, 3).unwrap();
            let fm = savitzky_golay(&mixed, 11, 3).unwrap();
            for i in 0..xs.len() {
                prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }
    }
}
