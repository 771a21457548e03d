//! Small differentiable models with exact per-sample gradients.
//!
//! Parameter layout is row-major with the bias last in every row:
//!
//! * `SoftmaxLinear`: `C` rows of `input_dim + 1`.
//! * `Mlp1`: `hidden` rows of `input_dim + 1` (tanh layer), then `C` rows of
//!   `hidden + 1` (output logits).
//!
//! `Quadratic` and `Constant` are reference models with closed-form dynamics:
//! `Quadratic` has loss `|theta - x|^2 / 2` (its parameter lives in feature
//! space), `Constant` has loss 0 everywhere.

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::error::{Error, Result};
use crate::measures::{LabeledPoint, WeightedDataset};
use crate::numkit::{norm2, pairwise_sum, sub, tree_weighted_sum, RealVec, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp1 { hidden_dim: usize },
    Quadratic,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::BadShape("input_dim must be positive".into()));
        }
        if num_classes == 0 {
            return Err(Error::BadShape("num_classes must be positive".into()));
        }
        if let ModelKind::Mlp1 { hidden_dim: 0 } = kind {
            return Err(Error::BadShape("mlp1 requires hidden_dim > 0".into()));
        }
        Ok(Self {
            kind,
            input_dim,
            num_classes,
        })
    }

    pub fn softmax_linear(input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::new(ModelKind::SoftmaxLinear, input_dim, num_classes)
    }

    pub fn mlp1(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self> {
        Self::new(ModelKind::Mlp1 { hidden_dim }, input_dim, num_classes)
    }

    pub fn param_dim(&self) -> usize {
        let (d, c) = (self.input_dim, self.num_classes);
        match self.kind {
            ModelKind::SoftmaxLinear => c * (d + 1),
            ModelKind::Mlp1 { hidden_dim: h } => h * (d + 1) + c * (h + 1),
            ModelKind::Quadratic => d,
            ModelKind::Constant => 1,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::SoftmaxLinear => "softmax_linear".into(),
            ModelKind::Mlp1 { hidden_dim } => format!("mlp1_h{hidden_dim}"),
            ModelKind::Quadratic => "quadratic".into(),
            ModelKind::Constant => "constant".into(),
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimMismatch(format!(
                "theta has {} entries, {} expects {}",
                theta.len(),
                self.label(),
                self.param_dim()
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64], label: usize) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch(format!(
                "point has dim {}, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if label >= self.num_classes {
            return Err(Error::DimMismatch(format!(
                "label {label} >= {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub(crate) fn check_dataset(&self, ds: &WeightedDataset) -> Result<()> {
        if ds.dim() != self.input_dim {
            return Err(Error::DimMismatch(format!(
                "dataset dim {} vs model input_dim {}",
                ds.dim(),
                self.input_dim
            )));
        }
        if ds.num_classes() > self.num_classes {
            return Err(Error::DimMismatch(format!(
                "dataset has {} classes, model {}",
                ds.num_classes(),
                self.num_classes
            )));
        }
        Ok(())
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    (lse - logits[label]).max(0.0)
}

/// Hidden activations of `Mlp1`.
fn hidden(theta: &[f64], x: &[f64], h: usize) -> Vec<f64> {
    let d = x.len();
    (0..h)
        .map(|j| {
            let row = &theta[j * (d + 1)..(j + 1) * (d + 1)];
            (crate::numkit::dot(&row[..d], x) + row[d]).tanh()
        })
        .collect()
}

fn affine_rows(theta: &[f64], input: &[f64], rows: usize, out: &mut Vec<f64>) {
    let w = input.len() + 1;
    out.clear();
    out.extend((0..rows).map(|c| {
        let row = &theta[c * w..(c + 1) * w];
        crate::numkit::dot(&row[..w - 1], input) + row[w - 1]
    }));
}

/// Class logits at `x`. Reference models return zeros.
pub fn logits(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let c = spec.num_classes;
    let mut out = Vec::with_capacity(c);
    match spec.kind {
        ModelKind::SoftmaxLinear => affine_rows(theta, x, c, &mut out),
        ModelKind::Mlp1 { hidden_dim: h } => {
            let a = hidden(theta, x, h);
            let off = h * (spec.input_dim + 1);
            affine_rows(&theta[off..], &a, c, &mut out);
        }
        ModelKind::Quadratic | ModelKind::Constant => out.resize(c, 0.0),
    }
    out
}

fn loss_unchecked(spec: &ModelSpec, theta: &[f64], x: &[f64], label: usize) -> f64 {
    match spec.kind {
        ModelKind::SoftmaxLinear | ModelKind::Mlp1 { .. } => {
            cross_entropy(&logits(spec, theta, x), label)
        }
        ModelKind::Quadratic => 0.5 * theta.iter().zip(x).map(|(t, v)| (t - v) * (t - v)).sum::<f64>(),
        ModelKind::Constant => 0.0,
    }
}

/// Writes the gradient of the per-sample loss into `out` (overwrites).
pub(crate) fn grad_into(spec: &ModelSpec, theta: &[f64], x: &[f64], label: usize, out: &mut [f64]) {
    let c = spec.num_classes;
    let d = spec.input_dim;
    match spec.kind {
        ModelKind::SoftmaxLinear => {
            let mut p = Vec::with_capacity(c);
            affine_rows(theta, x, c, &mut p);
            softmax_in_place(&mut p);
            for k in 0..c {
                let dz = p[k] - if k == label { 1.0 } else { 0.0 };
                let row = &mut out[k * (d + 1)..(k + 1) * (d + 1)];
                for j in 0..d {
                    row[j] = dz * x[j];
                }
                row[d] = dz;
            }
        }
        ModelKind::Mlp1 { hidden_dim: h } => {
            let a = hidden(theta, x, h);
            let off = h * (d + 1);
            let mut p = Vec::with_capacity(c);
            affine_rows(&theta[off..], &a, c, &mut p);
            softmax_in_place(&mut p);
            let mut da = vec![0.0; h];
            for k in 0..c {
                let dz = p[k] - if k == label { 1.0 } else { 0.0 };
                let w2 = &theta[off + k * (h + 1)..off + (k + 1) * (h + 1)];
                let g2 = &mut out[off + k * (h + 1)..off + (k + 1) * (h + 1)];
                for j in 0..h {
                    g2[j] = dz * a[j];
                    da[j] += dz * w2[j];
                }
                g2[h] = dz;
            }
            for j in 0..h {
                let dpre = da[j] * (1.0 - a[j] * a[j]);
                let g1 = &mut out[j * (d + 1)..(j + 1) * (d + 1)];
                for i in 0..d {
                    g1[i] = dpre * x[i];
                }
                g1[d] = dpre;
            }
        }
        ModelKind::Quadratic => {
            for (o, (t, v)) in out.iter_mut().zip(theta.iter().zip(x)) {
                *o = t - v;
            }
        }
        ModelKind::Constant => out.iter_mut().for_each(|o| *o = 0.0),
    }
}

/// Cross-entropy of the softmax output at `z.label`.
pub fn loss(spec: &ModelSpec, theta: &[f64], z: &LabeledPoint) -> Result<f64> {
    spec.check_theta(theta)?;
    spec.check_point(&z.features, z.label)?;
    Ok(loss_unchecked(spec, theta, &z.features, z.label))
}

/// Exact gradient of [`loss`] with respect to `theta`.
pub fn grad(spec: &ModelSpec, theta: &[f64], z: &LabeledPoint) -> Result<RealVec> {
    spec.check_theta(theta)?;
    spec.check_point(&z.features, z.label)?;
    let mut out = vec![0.0; spec.param_dim()];
    grad_into(spec, theta, &z.features, z.label, &mut out);
    Ok(out.into())
}

/// `E_mu g(theta; z)` with a fixed-order tree reduction.
pub fn mean_grad(spec: &ModelSpec, theta: &[f64], ds: &WeightedDataset) -> Result<Vec<f64>> {
    spec.check_theta(theta)?;
    spec.check_dataset(ds)?;
    Ok(mean_grad_unchecked(spec, theta, ds))
}

pub(crate) fn mean_grad_unchecked(spec: &ModelSpec, theta: &[f64], ds: &WeightedDataset) -> Vec<f64> {
    let pts = ds.points();
    let w = ds.weights();
    tree_weighted_sum(ds.len(), spec.param_dim(), |i| w[i], |i, out| {
        grad_into(spec, theta, &pts[i].features, pts[i].label, out)
    })
}

/// Weighted empirical risk.
pub fn risk(spec: &ModelSpec, theta: &[f64], ds: &WeightedDataset) -> Result<f64> {
    spec.check_theta(theta)?;
    spec.check_dataset(ds)?;
    let terms: Vec<f64> = ds
        .points()
        .iter()
        .zip(ds.weights())
        .map(|(p, w)| w * loss_unchecked(spec, theta, &p.features, p.label))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Argmax class; ties go to the smaller index.
pub fn predict(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> usize {
    let z = logits(spec, theta, x);
    let mut best = 0;
    for (k, v) in z.iter().enumerate().skip(1) {
        if *v > z[best] {
            best = k;
        }
    }
    best
}

/// Weight-weighted fraction of correctly classified points.
pub fn accuracy(spec: &ModelSpec, theta: &[f64], ds: &WeightedDataset) -> Result<f64> {
    spec.check_theta(theta)?;
    spec.check_dataset(ds)?;
    let hits: Vec<bool> = ds
        .points()
        .iter()
        .map(|p| predict(spec, theta, &p.features) == p.label)
        .collect();
    let w = ds.weights();
    if w.iter().all(|v| *v == w[0]) {
        // uniform measure: exact count ratio
        return Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64);
    }
    let terms: Vec<f64> = hits.iter().zip(w).map(|(h, w)| if *h { *w } else { 0.0 }).collect();
    Ok(pairwise_sum(&terms).clamp(0.0, 1.0))
}

/// Weights `~ N(0, 1/fan_in)`, biases 0.
pub fn init_params(spec: &ModelSpec, rng: &RngStream) -> RealVec {
    let mut rng = rng.fork("init");
    let d = spec.input_dim;
    let c = spec.num_classes;
    let mut theta = vec![0.0; spec.param_dim()];
    let fill_rows = |theta: &mut [f64], rows: usize, fan_in: usize, rng: &mut RngStream| {
        let s = 1.0 / (fan_in as f64).sqrt();
        for r in 0..rows {
            for j in 0..fan_in {
                theta[r * (fan_in + 1) + j] = s * rng.normal();
            }
        }
    };
    match spec.kind {
        ModelKind::SoftmaxLinear => fill_rows(&mut theta, c, d, &mut rng),
        ModelKind::Mlp1 { hidden_dim: h } => {
            fill_rows(&mut theta[..h * (d + 1)], h, d, &mut rng);
            fill_rows(&mut theta[h * (d + 1)..], c, h, &mut rng);
        }
        ModelKind::Quadratic => {
            let s = 1.0 / (d as f64).sqrt();
            theta.iter_mut().for_each(|t| *t = s * rng.normal());
        }
        ModelKind::Constant => {}
    }
    theta.into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimates {
    pub l_theta: f64,
    pub l_z: f64,
    pub probes_used: usize,
}

/// Empirical Lipschitz constants of the preconditioned mean update in
/// `theta` and of the per-sample gradient in the data argument.
///
/// Probe parameters come from the model's init distribution. Both values
/// are maxima over finite probe sets, hence lower bounds of the true
/// constants.
pub fn estimate_lipschitz(
    spec: &ModelSpec,
    config: &Configuration,
    ds: &WeightedDataset,
    n_probes: usize,
    perturb_scale: f64,
    rng: &RngStream,
) -> Result<LipschitzEstimates> {
    if n_probes < 2 {
        return Err(crate::error::invalid("estimate_lipschitz needs at least 2 probes"));
    }
    let thetas: Vec<RealVec> = (0..n_probes)
        .map(|i| init_params(spec, &rng.fork(&format!("theta-{i}"))))
        .collect();
    estimate_lipschitz_at(spec, config, ds, &thetas, n_probes, perturb_scale, rng)
}

/// [`estimate_lipschitz`] at caller-supplied parameter probes.
///
/// The data sample and perturbation directions are drawn once and shared by
/// every probe, so the result is a max over a multiset: repeating a probe
/// leaves it unchanged.
pub fn estimate_lipschitz_at(
    spec: &ModelSpec,
    config: &Configuration,
    ds: &WeightedDataset,
    thetas: &[RealVec],
    n_data: usize,
    perturb_scale: f64,
    rng: &RngStream,
) -> Result<LipschitzEstimates> {
    if thetas.is_empty() {
        return Err(crate::error::invalid("no parameter probes"));
    }
    if !(perturb_scale > 0.0) {
        return Err(crate::error::invalid(format!("perturb_scale {perturb_scale}")));
    }
    spec.check_dataset(ds)?;
    for t in thetas {
        spec.check_theta(t)?;
    }
    let p = spec.param_dim();
    let d = spec.input_dim;
    let n_dirs = 4;
    let mut dir_rng = rng.fork("lipschitz-dirs");
    let theta_dirs: Vec<Vec<f64>> = (0..n_dirs).map(|_| dir_rng.unit_vector(p)).collect();
    let data_dirs: Vec<Vec<f64>> = (0..n_dirs).map(|_| dir_rng.unit_vector(d)).collect();
    let mut data_rng = rng.fork("lipschitz-data");
    let sample: Vec<usize> = (0..n_data.max(1)).map(|_| data_rng.index(ds.len())).collect();

    let update = |theta: &[f64]| -> Vec<f64> {
        let g = mean_grad_unchecked(spec, theta, ds);
        config.preconditioner.apply_stateless(&g)
    };

    let mut l_theta = 0.0f64;
    let updates: Vec<Vec<f64>> = thetas.iter().map(|t| update(t)).collect();
    for i in 0..thetas.len() {
        for j in i + 1..thetas.len() {
            let gap = norm2(&sub(&thetas[i], &thetas[j]));
            if gap > 1e-12 {
                l_theta = l_theta.max(norm2(&sub(&updates[i], &updates[j])) / gap);
            }
        }
        for dir in &theta_dirs {
            let moved: Vec<f64> = thetas[i].iter().zip(dir).map(|(t, u)| t + perturb_scale * u).collect();
            l_theta = l_theta.max(norm2(&sub(&update(&moved), &updates[i])) / perturb_scale);
        }
    }

    let mut l_z = 0.0f64;
    let mut g0 = vec![0.0; p];
    let mut g1 = vec![0.0; p];
    let pts = ds.points();
    for theta in thetas {
        for (a, &i) in sample.iter().enumerate() {
            let z = &pts[i];
            grad_into(spec, theta, &z.features, z.label, &mut g0);
            for dir in &data_dirs {
                let moved: Vec<f64> = z.features.iter().zip(dir).map(|(x, u)| x + perturb_scale * u).collect();
                grad_into(spec, theta, &moved, z.label, &mut g1);
                l_z = l_z.max(norm2(&sub(&g1, &g0)) / perturb_scale);
            }
            // same-class pairs from the sample
            for &j in &sample[a + 1..] {
                let other = &pts[j];
                if other.label != z.label {
                    continue;
                }
                let gap = norm2(&sub(&z.features, &other.features));
                if gap > 1e-12 {
                    grad_into(spec, theta, &other.features, other.label, &mut g1);
                    l_z = l_z.max(norm2(&sub(&g1, &g0)) / gap);
                }
            }
        }
    }
    Ok(LipschitzEstimates {
        l_theta,
        l_z,
        probes_used: thetas.len(),
    })
}
