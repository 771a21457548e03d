//! Datasets as weighted empirical measures.

mod idx;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{RealVec, RngStream};

pub use idx::{load_idx, write_idx_images, write_idx_labels, IMAGES_MAGIC, LABELS_MAGIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: RealVec,
    pub label: usize,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self {
            features: features.into(),
            label,
        }
    }
}

/// Empirical measure `sum_i w_i * delta_{z_i}` over labelled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset {
    points: Vec<LabeledPoint>,
    weights: Vec<f64>,
    num_classes: usize,
}

impl WeightedDataset {
    /// Builds a measure, normalising `weights` to sum to one.
    pub fn new(points: Vec<LabeledPoint>, weights: Vec<f64>, num_classes: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::BadShape("dataset has no points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::DimMismatch(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].features.len();
        if dim == 0 {
            return Err(Error::BadShape("zero-dimensional features".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(Error::DimMismatch(format!(
                    "point {i} has dim {} (expected {dim})",
                    p.features.len()
                )));
            }
            if p.label >= num_classes {
                return Err(Error::BadShape(format!(
                    "point {i} has label {} >= {num_classes} classes",
                    p.label
                )));
            }
            if !p.features.is_finite() {
                return Err(Error::BadShape(format!("point {i} has non-finite features")));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::BadShape("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::BadShape("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            points,
            weights,
            num_classes,
        })
    }

    pub fn uniform(points: Vec<LabeledPoint>, num_classes: usize) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n], num_classes)
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].features.len()
    }

    /// Indices of the points carrying each label.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, p) in self.points.iter().enumerate() {
            out[p.label].push(i);
        }
        out
    }

    /// Total weight per class.
    pub fn class_mass(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes];
        for (p, w) in self.points.iter().zip(&self.weights) {
            out[p.label] += w;
        }
        out
    }

    /// Sub-measure on `indices`, weights renormalised.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        let weights = indices.iter().map(|&i| self.weights[i]).collect();
        Self::new(points, weights, self.num_classes)
    }

    /// Measure restricted to one class, or `None` if the class has no mass.
    pub fn class_measure(&self, class: usize) -> Option<Self> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.points[i].label == class && self.weights[i] > 0.0)
            .collect();
        if idx.is_empty() {
            None
        } else {
            self.subset(&idx).ok()
        }
    }

    /// Weighted mean and per-coordinate standard deviation of a class.
    pub fn class_moments(&self, class: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = self.class_measure(class)?;
        let d = m.dim();
        let mut mean = vec![0.0; d];
        for (p, w) in m.points.iter().zip(&m.weights) {
            crate::numkit::axpy(*w, &p.features, &mut mean);
        }
        let mut var = vec![0.0; d];
        for (p, w) in m.points.iter().zip(&m.weights) {
            for j in 0..d {
                let c = p.features[j] - mean[j];
                var[j] += w * c * c;
            }
        }
        Some((mean, var.into_iter().map(f64::sqrt).collect()))
    }
}

/// Fixed unit direction of class `c`: coordinate axes when `dim >= C`,
/// otherwise equally spaced angles on the unit circle in the first two
/// coordinates. In one dimension classes sit at evenly spaced points of `[-1, 1]`.
pub fn class_direction(c: usize, num_classes: usize, dim: usize) -> Vec<f64> {
    let mut u = vec![0.0; dim];
    if dim >= num_classes {
        u[c] = 1.0;
    } else if dim >= 2 {
        let phi = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
        u[0] = phi.cos();
        u[1] = phi.sin();
    } else {
        u[0] = 2.0 * c as f64 / (num_classes - 1) as f64 - 1.0;
    }
    u
}

/// Isotropic Gaussian classes centred at `class_separation * u_c`.
pub fn make_gaussian_mixture(
    num_classes: usize,
    dim: usize,
    n_per_class: usize,
    class_separation: f64,
    noise_sigma: f64,
    rng: &RngStream,
) -> Result<WeightedDataset> {
    if dim < 1 {
        return Err(Error::BadShape("dim must be at least 1".into()));
    }
    if num_classes < 1 || n_per_class < 1 {
        return Err(Error::BadShape("counts must be at least 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(crate::error::invalid(format!("noise_sigma {noise_sigma}")));
    }
    let mut rng = rng.fork("gaussian_mixture");
    let mut points = Vec::with_capacity(num_classes * n_per_class);
    for c in 0..num_classes {
        let mean: Vec<f64> = class_direction(c, num_classes, dim)
            .into_iter()
            .map(|u| class_separation * u)
            .collect();
        for _ in 0..n_per_class {
            let x = mean.iter().map(|m| m + noise_sigma * rng.normal()).collect();
            points.push(LabeledPoint::new(x, c));
        }
    }
    WeightedDataset::uniform(points, num_classes)
}

/// Class-stratified split; the first part receives `round(fraction * n_c)`
/// points of every class `c`.
pub fn split(
    ds: &WeightedDataset,
    fraction: f64,
    rng: &RngStream,
) -> Result<(WeightedDataset, WeightedDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(crate::error::invalid(format!("split fraction {fraction}")));
    }
    let mut rng = rng.fork("split");
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (c, idx) in ds.class_indices().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let take = (fraction * idx.len() as f64).round() as usize;
        if take == 0 || take == idx.len() {
            return Err(Error::EmptyPart { class: c });
        }
        let perm = rng.permutation(idx.len());
        let mut a: Vec<usize> = perm[..take].iter().map(|&p| idx[p]).collect();
        let mut b: Vec<usize> = perm[take..].iter().map(|&p| idx[p]).collect();
        a.sort_unstable();
        b.sort_unstable();
        first.extend(a);
        second.extend(b);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((ds.subset(&first)?, ds.subset(&second)?))
}
