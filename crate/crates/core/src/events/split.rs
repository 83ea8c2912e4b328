use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a floor-rounded partition; the test split
/// takes whatever remains.
pub fn split_dataset<T>(mut items: Vec<T>, ratios: [f64; 3], seed: u64) -> Result<Split<T>> {
    if items.is_empty() {
        return Err(Error::Empty("cannot split an empty collection"));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n = items.len();
    let n_train = (ratios[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = ((ratios[1] * n as f64 + 1e-9).floor() as usize).min(n - n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let test = items.split_off(n_train + n_val);
    let val = items.split_off(n_train);
    Ok(Split { train: items, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes_follow_floor_rule() {
        let s = split_dataset((0..1000).collect::<Vec<_>>(), DEFAULT_SPLIT_RATIOS, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (700, 150, 150));
        let s = split_dataset((0..10).collect::<Vec<_>>(), DEFAULT_SPLIT_RATIOS, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
    }

    #[test]
    fn seeded_and_deterministic() {
        let a = split_dataset((0..50).collect::<Vec<_>>(), DEFAULT_SPLIT_RATIOS, 9).unwrap();
        let b = split_dataset((0..50).collect::<Vec<_>>(), DEFAULT_SPLIT_RATIOS, 9).unwrap();
        let c = split_dataset((0..50).collect::<Vec<_>>(), DEFAULT_SPLIT_RATIOS, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_empty_and_bad_ratios() {
        assert!(split_dataset(Vec::<u8>::new(), DEFAULT_SPLIT_RATIOS, 0).is_err());
        assert!(split_dataset(vec![1, 2], [0.5, 0.5, 0.1], 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_exact(n in 1usize..500, seed in any::<u64>()) {
            let s = split_dataset((0..n).collect::<Vec<_>>(), DEFAULT_SPLIT_RATIOS, seed).unwrap();
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
