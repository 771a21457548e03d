use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real vector: parameters, features, gradients and updates.
///
/// `RealVec::new` enforces the non-empty / finite invariant. The `From`
/// conversion does not check and is meant for values produced by this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealVec(Vec<f64>);

impl RealVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::BadShape("empty vector".into()));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadShape(format!("entry {i} is not finite")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for RealVec {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for RealVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for RealVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn linf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

const LEAF: usize = 32;

/// Pairwise (tree) summation. The association order depends only on the
/// length, so results are reproducible however the caller schedules work.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Tree reduction of `sum_i w_i * f(i)` for vector-valued `f`.
///
/// Leaves of at most 32 terms are accumulated in index order, then combined
/// pairwise. `f` writes its term into the scratch slice it is handed.
pub fn tree_weighted_sum<F>(n: usize, dim: usize, weight: impl Fn(usize) -> f64 + Copy, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Copy,
{
    fn go<F: Fn(usize, &mut [f64]) + Copy>(
        lo: usize,
        hi: usize,
        dim: usize,
        weight: impl Fn(usize) -> f64 + Copy,
        f: F,
        scratch: &mut [f64],
    ) -> Vec<f64> {
        if hi - lo <= LEAF {
            let mut acc = vec![0.0; dim];
            for i in lo..hi {
                let w = weight(i);
                if w == 0.0 {
                    continue;
                }
                scratch.iter_mut().for_each(|s| *s = 0.0);
                f(i, scratch);
                axpy(w, scratch, &mut acc);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        let mut left = go(lo, mid, dim, weight, f, scratch);
        let right = go(mid, hi, dim, weight, f, scratch);
        axpy(1.0, &right, &mut left);
        left
    }
    let mut scratch = vec![0.0; dim];
    go(0, n, dim, weight, f, &mut scratch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_empty_and_nan() {
        assert!(RealVec::new(vec![]).is_err());
        assert!(RealVec::new(vec![1.0, f64::NAN]).is_err());
        assert!(RealVec::new(vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn tree_sum_is_weighted_mean() {
        let out = tree_weighted_sum(100, 2, |_| 0.01, |i, s| {
            s[0] = i as f64;
            s[1] = 1.0;
        });
        assert!((out[0] - 49.5).abs() < 1e-12);
        assert!((out[1] - 1.0).abs() < 1e-12);
    }
}
