use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Scaled (spacing, follower speed, relative speed).
    pub state: [f64; 3],
    pub action: f64,
    pub reward: f64,
    pub next_state: [f64; 3],
    pub done: bool,
}

/// FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < batch_size || batch_size == 0 {
            return Err(Error::Underfilled {
                len: self.items.len(),
                requested: batch_size,
            });
        }
        Ok((0..batch_size).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(k: f64) -> Transition {
        Transition {
            state: [k, 0.0, 0.0],
            action: 0.0,
            reward: k,
            next_state: [k, 0.0, 0.0],
            done: false,
        }
    }

    #[test]
    fn evicts_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for k in 0..4 {
            b.push(tr(k as f64));
        }
        assert_eq!(b.len(), 3);
        assert!((0..3).all(|i| b.get(i).unwrap().reward != 0.0));
        assert_eq!(b.get(0).unwrap().reward, 1.0);
    }

    #[test]
    fn underfilled_sample_errors() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(tr(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(2, &mut rng), Err(Error::Underfilled { len: 1, requested: 2 })));
    }

    #[test]
    fn seeded_sampling_reproducible() {
        let mut b = ReplayBuffer::new(100).unwrap();
        (0..50).for_each(|k| b.push(tr(k as f64)));
        let a = b.sample(16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let c = b.sample(16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn sampling_is_uniform_chi_squared() {
        let mut b = ReplayBuffer::new(10).unwrap();
        (0..10).for_each(|k| b.push(tr(k as f64)));
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0u64; 10];
        let draws = 100_000;
        for _ in 0..draws / 10 {
            for i in b.sample_indices(10, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 0.99 quantile of chi-squared with 9 degrees of freedom.
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }
}
