use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then train and val sizes rounded to the nearest item and
/// the rest to test.
pub fn split_dataset<T: Clone>(items: &[T], fractions: SplitFractions, seed: u64) -> Result<Split<T>, EvalError> {
    let f = [fractions.train, fractions.val, fractions.test];
    if f.iter().any(|x| !(*x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadFractions(f));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * fractions.train).round() as usize).min(n);
    let n_val = ((n as f64 * fractions.val).round() as usize).min(n - n_train);
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventy_ten_twenty() {
        let items: Vec<u32> = (0..100).collect();
        let s = split_dataset(&items, SplitFractions::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        let mut all: Vec<u32> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, items);
    }

    #[test]
    fn all_train() {
        let items: Vec<u32> = (0..7).collect();
        let s = split_dataset(&items, SplitFractions { train: 1.0, val: 0.0, test: 0.0 }, 3).unwrap();
        assert_eq!(s.train.len(), 7);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn deterministic() {
        let items: Vec<u32> = (0..50).collect();
        let a = split_dataset(&items, SplitFractions::default(), 9).unwrap();
        assert_eq!(a, split_dataset(&items, SplitFractions::default(), 9).unwrap());
        assert_ne!(a, split_dataset(&items, SplitFractions::default(), 10).unwrap());
    }

    #[test]
    fn bad_fractions() {
        let f = SplitFractions { train: 0.5, val: 0.1, test: 0.1 };
        assert!(matches!(split_dataset(&[1], f, 0), Err(EvalError::BadFractions(_))));
        let f = SplitFractions { train: 1.2, val: -0.2, test: 0.0 };
        assert!(split_dataset(&[1], f, 0).is_err());
    }
}
