//! Matching surrogates: distribution (MMD, sliced W1), gradient and
//! trajectory matching, plus the outer update on synthetic atoms.

mod matching;
mod mmd;
mod outer;
mod sliced;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{LabeledPoint, WeightedDataset};
use crate::numkit::{ols_fit, RealVec};

pub use matching::{gm_objective, tm_objective, GmContext, TmContext};
pub use mmd::{mmd, mmd_grad_atoms, mmd_sq_grad, rbf};
pub use outer::{outer_step, GradMode, Objective};
pub use sliced::{sliced_w1, sliced_w1_directions, w1_1d};

/// Distilled set: `ipc` atoms per class with fixed labels and uniform weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSet {
    atoms: Vec<RealVec>,
    labels: Vec<usize>,
    num_classes: usize,
    ipc: usize,
}

impl SyntheticSet {
    pub fn new(atoms: Vec<RealVec>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != labels.len() {
            return Err(Error::BadShape(format!("{} atoms, {} labels", atoms.len(), labels.len())));
        }
        if num_classes == 0 || atoms.len() % num_classes != 0 {
            return Err(Error::BadShape(format!("{} atoms over {num_classes} classes", atoms.len())));
        }
        let ipc = atoms.len() / num_classes;
        let mut counts = vec![0usize; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(Error::BadShape(format!("label {l} >= {num_classes}")));
            }
            counts[l] += 1;
        }
        if counts.iter().any(|&c| c != ipc) {
            return Err(Error::BadShape(format!("labels not balanced: {counts:?}")));
        }
        let dim = atoms[0].len();
        if atoms.iter().any(|a| a.len() != dim || !a.is_finite()) {
            return Err(Error::BadShape("atoms must share a dimension and be finite".into()));
        }
        Ok(Self {
            atoms,
            labels,
            num_classes,
            ipc,
        })
    }

    pub fn atoms(&self) -> &[RealVec] {
        &self.atoms
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ipc(&self) -> usize {
        self.ipc
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// Same labels, new atom positions.
    pub fn with_atoms(&self, atoms: Vec<RealVec>) -> Result<Self> {
        Self::new(atoms, self.labels.clone(), self.num_classes)
    }

    /// The uniform empirical measure `mu(xi)`.
    pub fn to_measure(&self) -> WeightedDataset {
        measure_of(&self.atoms, &self.labels, self.num_classes)
    }
}

pub(crate) fn measure_of(atoms: &[RealVec], labels: &[usize], num_classes: usize) -> WeightedDataset {
    let pts = atoms
        .iter()
        .zip(labels)
        .map(|(a, &l)| LabeledPoint {
            features: a.clone(),
            label: l,
        })
        .collect();
    WeightedDataset::uniform(pts, num_classes).expect("synthetic set is a valid measure")
}

/// Surrogate values per outer iteration and the fitted contraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTrace {
    pub values: Vec<f64>,
    /// `None` when the recursion is not identifiable (fewer than 3 values).
    pub alpha_hat: Option<f64>,
    pub floor_hat: Option<f64>,
}

impl SurrogateTrace {
    pub fn from_values(values: Vec<f64>) -> Self {
        let (alpha_hat, floor_hat) = match fit_contraction(&values) {
            Ok((a, f)) => (Some(a), Some(f)),
            Err(_) => match values.first() {
                Some(&v0) if values.iter().all(|v| *v == v0) => (Some(0.0), Some(v0)),
                _ => (None, None),
            },
        };
        Self {
            values,
            alpha_hat,
            floor_hat,
        }
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("trace is non-empty")
    }
}

/// Least-squares fit of `v_{j+1} = (1 - alpha) v_j + floor` over consecutive
/// pairs. Constant sequences return `(0, value)`.
pub fn fit_contraction(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} trace values", values.len())));
    }
    if values.iter().all(|v| *v == values[0]) {
        return Ok((0.0, values[0]));
    }
    let xs = &values[..values.len() - 1];
    let ys = &values[1..];
    let fit = ols_fit(xs, ys)?;
    Ok((1.0 - fit.slope, fit.intercept))
}
