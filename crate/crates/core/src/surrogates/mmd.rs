use crate::error::{Error, Result};
use crate::measures::WeightedDataset;
use crate::numkit::axpy;

use super::SyntheticSet;

/// Gaussian kernel `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn rbf(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

type Atoms<'a> = (Vec<&'a [f64]>, Vec<f64>);

fn kernel_mean(a: &Atoms, b: &Atoms, sigma: f64) -> f64 {
    let mut s = 0.0;
    for (x, wx) in a.0.iter().zip(&a.1) {
        let mut row = 0.0;
        for (y, wy) in b.0.iter().zip(&b.1) {
            row += wy * rbf(x, y, sigma);
        }
        s += wx * row;
    }
    s
}

fn mmd_sq_atoms(a: &Atoms, b: &Atoms, sigma: f64) -> f64 {
    kernel_mean(a, a, sigma) - 2.0 * kernel_mean(a, b, sigma) + kernel_mean(b, b, sigma)
}

fn sqrt_clamped(r: f64) -> f64 {
    // round-off may push the radicand a hair below zero
    if r <= 0.0 {
        0.0
    } else {
        r.sqrt()
    }
}

fn atoms_of(ds: &WeightedDataset) -> Atoms<'_> {
    (
        ds.points().iter().map(|p| p.features.as_slice()).collect(),
        ds.weights().to_vec(),
    )
}

/// Per-class atoms (weights renormalised within the class) keyed by class.
fn class_atoms(ds: &WeightedDataset) -> Vec<Option<(Atoms<'_>, f64)>> {
    let mass = ds.class_mass();
    let mut out: Vec<Option<(Atoms, f64)>> = (0..ds.num_classes()).map(|_| None).collect();
    for (p, w) in ds.points().iter().zip(ds.weights()) {
        if *w == 0.0 {
            continue;
        }
        let slot = out[p.label].get_or_insert_with(|| ((Vec::new(), Vec::new()), mass[p.label]));
        slot.0 .0.push(p.features.as_slice());
        slot.0 .1.push(w / mass[p.label]);
    }
    out
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(crate::error::invalid(format!("kernel bandwidth {sigma}")))
    }
}

/// Pairs per-class pieces of `source` and `target`, weighting each class by
/// its mass under `target`.
fn paired_classes<'a>(
    source: &'a WeightedDataset,
    target: &'a WeightedDataset,
) -> Result<Vec<(usize, Atoms<'a>, Atoms<'a>, f64)>> {
    let s = class_atoms(source);
    let t = class_atoms(target);
    let classes = source.num_classes().max(target.num_classes());
    let mut out = Vec::new();
    for c in 0..classes {
        let sc = s.get(c).and_then(|x| x.as_ref());
        let tc = t.get(c).and_then(|x| x.as_ref());
        match (sc, tc) {
            (None, None) => {}
            (Some((sa, _)), Some((ta, mass))) => out.push((c, sa.clone(), ta.clone(), *mass)),
            _ => return Err(Error::MissingClass(c)),
        }
    }
    Ok(out)
}

/// RBF-kernel maximum mean discrepancy between weighted measures.
///
/// In class-conditional mode the result is the average of per-class MMDs
/// weighted by the target's class masses; every class present in either
/// measure must be present in both.
pub fn mmd(source: &WeightedDataset, target: &WeightedDataset, sigma: f64, class_conditional: bool) -> Result<f64> {
    check_sigma(sigma)?;
    if source.dim() != target.dim() {
        return Err(Error::DimMismatch(format!("dims {} vs {}", source.dim(), target.dim())));
    }
    if !class_conditional {
        return Ok(sqrt_clamped(mmd_sq_atoms(&atoms_of(source), &atoms_of(target), sigma)));
    }
    Ok(paired_classes(source, target)?
        .iter()
        .map(|(_, a, b, m)| m * sqrt_clamped(mmd_sq_atoms(a, b, sigma)))
        .sum())
}

/// Gradient of `MMD^2(sum_i w_i delta_{x_i}, target)` with respect to each
/// `x_i`.
pub fn mmd_sq_grad(atoms: &[&[f64]], weights: &[f64], target: &[&[f64]], target_w: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    let s2 = sigma * sigma;
    atoms
        .iter()
        .zip(weights)
        .map(|(xa, wa)| {
            let mut g = vec![0.0; xa.len()];
            for (xj, wj) in atoms.iter().zip(weights) {
                let k = rbf(xa, xj, sigma);
                for (gi, (a, b)) in g.iter_mut().zip(xa.iter().zip(xj.iter())) {
                    *gi -= wj * k * (a - b);
                }
            }
            for (yj, vj) in target.iter().zip(target_w) {
                let k = rbf(xa, yj, sigma);
                for (gi, (a, b)) in g.iter_mut().zip(xa.iter().zip(yj.iter())) {
                    *gi += vj * k * (a - b);
                }
            }
            g.iter_mut().for_each(|v| *v *= 2.0 * wa / s2);
            g
        })
        .collect()
}

/// MMD^2 below this multiple of `eps * (K_aa + K_bb)` is round-off.
const ZERO_RADICAND_ULPS: f64 = 64.0;

/// Gradient of [`mmd`]`(mu(xi), target)` with respect to every atom of `xi`.
/// Where an MMD term vanishes its contribution is taken to be zero.
pub fn mmd_grad_atoms(xi: &SyntheticSet, target: &WeightedDataset, sigma: f64, class_conditional: bool) -> Result<Vec<Vec<f64>>> {
    check_sigma(sigma)?;
    let src = xi.to_measure();
    let k = xi.k();
    let dim = xi.dim();
    let mut out = vec![vec![0.0; dim]; k];
    let groups: Vec<(Vec<usize>, Atoms, f64)> = if class_conditional {
        let t = class_atoms(target);
        let s_idx = src.class_indices();
        let mut groups = Vec::new();
        for c in 0..xi.num_classes().max(target.num_classes()) {
            let idx = s_idx.get(c).cloned().unwrap_or_default();
            match (idx.is_empty(), t.get(c).and_then(|x| x.clone())) {
                (true, None) => {}
                (false, Some((ta, mass))) => groups.push((idx, ta, mass)),
                _ => return Err(Error::MissingClass(c)),
            }
        }
        groups
    } else {
        vec![((0..k).collect(), atoms_of(target), 1.0)]
    };
    for (idx, tgt, mass) in groups {
        let atoms: Vec<&[f64]> = idx.iter().map(|&i| xi.atoms()[i].as_slice()).collect();
        let w = vec![1.0 / idx.len() as f64; idx.len()];
        let src_atoms = (atoms.clone(), w.clone());
        let (kaa, kbb) = (kernel_mean(&src_atoms, &src_atoms, sigma), kernel_mean(&tgt, &tgt, sigma));
        let r = kaa - 2.0 * kernel_mean(&src_atoms, &tgt, sigma) + kbb;
        if r <= ZERO_RADICAND_ULPS * f64::EPSILON * (kaa + kbb) {
            continue;
        }
        let m = r.sqrt();
        let g = mmd_sq_grad(&atoms, &w, &tgt.0, &tgt.1, sigma);
        for (&i, gi) in idx.iter().zip(g) {
            axpy(mass / (2.0 * m), &gi, &mut out[i]);
        }
    }
    Ok(out)
}
