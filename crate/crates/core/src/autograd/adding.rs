use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// One adding-problem sequence: values in `[0, 1)`, a two-hot marker row,
/// and the sum of the two marked values.
#[derive(Debug, Clone, PartialEq)]
pub struct AddingExample {
    pub values: Vec<f64>,
    pub markers: Vec<f64>,
    pub target: f64,
}

impl AddingExample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Positions whose marker is set, in increasing order.
    pub fn marked(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.markers[i] == 1.0).collect()
    }
}

/// Variance of the sum of two independent `U(0, 1)` draws, i.e. the MSE of
/// always predicting the mean target 1.0.
pub const ADDING_BASELINE_MSE: f64 = 2.0 / 12.0;

/// Deterministic, endless stream of adding-problem examples.
#[derive(Debug, Clone)]
pub struct AddingStream {
    n: usize,
    rng: ChaCha8Rng,
}

pub fn generate_adding(n: usize, seed: u64) -> Result<AddingStream> {
    if n < 2 {
        return Err(Error::invalid(format!("adding problem needs at least 2 positions, got {n}")));
    }
    Ok(AddingStream { n, rng: ChaCha8Rng::seed_from_u64(seed) })
}

impl AddingStream {
    pub fn seq_len(&self) -> usize {
        self.n
    }

    /// `batch` examples stacked as a `(batch * n, 2)` input (value, marker)
    /// and a `(batch, 1)` target column.
    pub fn next_batch(&mut self, batch: usize) -> (Tensor2D, Tensor2D) {
        let mut x = Vec::with_capacity(batch * self.n * 2);
        let mut y = Vec::with_capacity(batch);
        for ex in self.by_ref().take(batch) {
            for (v, m) in ex.values.iter().zip(&ex.markers) {
                x.push(*v);
                x.push(*m);
            }
            y.push(ex.target);
        }
        let n = self.n;
        (
            Tensor2D::from_vec(batch * n, 2, x).expect("batch layout"),
            Tensor2D::from_vec(batch, 1, y).expect("batch layout"),
        )
    }
}

impl Iterator for AddingStream {
    type Item = AddingExample;

    fn next(&mut self) -> Option<AddingExample> {
        let values: Vec<f64> = (0..self.n).map(|_| self.rng.gen::<f64>()).collect();
        let mut markers = vec![0.0; self.n];
        for p in index::sample(&mut self.rng, self.n, 2) {
            markers[p] = 1.0;
        }
        let target = values.iter().zip(&markers).map(|(v, m)| v * m).sum();
        Some(AddingExample { values, markers, target })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_is_sum_of_marked_values() {
        for ex in generate_adding(10, 3).unwrap().take(100) {
            let m = ex.marked();
            assert_eq!(m.len(), 2);
            assert_eq!(ex.target, ex.values[m[0]] + ex.values[m[1]]);
            assert!(ex.values.iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<_> = generate_adding(5, 9).unwrap().take(20).collect();
        let b: Vec<_> = generate_adding(5, 9).unwrap().take(20).collect();
        let c: Vec<_> = generate_adding(5, 10).unwrap().take(20).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_short_sequences() {
        assert!(generate_adding(1, 0).is_err());
        assert!(generate_adding(2, 0).is_ok());
    }

    #[test]
    fn batch_layout() {
        let mut s = generate_adding(3, 1).unwrap();
        let (x, y) = s.next_batch(2);
        let ex: Vec<_> = generate_adding(3, 1).unwrap().take(2).collect();
        assert_eq!(x.shape(), (6, 2));
        assert_eq!(x[(4, 0)], ex[1].values[1]);
        assert_eq!(x[(4, 1)], ex[1].markers[1]);
        assert_eq!(y.data(), &[ex[0].target, ex[1].target]);
    }
}
