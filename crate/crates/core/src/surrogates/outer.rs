use crate::error::{Error, Result};
use crate::measures::WeightedDataset;
use crate::numkit::{central_diff_grad, linf, RealVec};

use super::matching::{GmContext, TmContext};
use super::mmd::{mmd, mmd_grad_atoms};
use super::sliced::sliced_w1_on;
use super::{measure_of, SyntheticSet};

/// Outer objective with whatever per-iteration state it needs.
#[derive(Debug, Clone)]
pub enum Objective<'a> {
    DmMmd {
        target: &'a WeightedDataset,
        sigma: f64,
        class_conditional: bool,
    },
    DmSw1 {
        target: &'a WeightedDataset,
        directions: Vec<Vec<f64>>,
        class_conditional: bool,
    },
    Gm(GmContext),
    Tm(TmContext),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Analytic,
    Fd,
}

impl Objective<'_> {
    pub fn value_of(&self, source: &WeightedDataset) -> Result<f64> {
        match self {
            Objective::DmMmd { target, sigma, class_conditional } => mmd(source, target, *sigma, *class_conditional),
            Objective::DmSw1 { target, directions, class_conditional } => {
                sliced_w1_on(source, target, directions, *class_conditional)
            }
            Objective::Gm(ctx) => ctx.value(source),
            Objective::Tm(ctx) => ctx.value(source),
        }
    }

    pub fn value(&self, xi: &SyntheticSet) -> Result<f64> {
        self.value_of(&xi.to_measure())
    }
}

fn fd_gradient(xi: &SyntheticSet, objective: &Objective) -> Result<Vec<Vec<f64>>> {
    let labels = xi.labels();
    let c = xi.num_classes();
    let mut atoms: Vec<RealVec> = xi.atoms().to_vec();
    let mut out = Vec::with_capacity(atoms.len());
    for a in 0..atoms.len() {
        let h = 1e-3 * (1.0 + linf(&atoms[a]));
        let base = atoms[a].clone();
        let g = central_diff_grad(
            |x| {
                let mut probe = atoms.clone();
                probe[a] = x.to_vec().into();
                objective.value_of(&measure_of(&probe, labels, c)).unwrap_or(f64::NAN)
            },
            &base,
            h,
        )
        .map_err(|_| Error::NonFiniteGradient { partial_trace: Vec::new() })?;
        atoms[a] = base;
        out.push(g);
    }
    Ok(out)
}

/// One gradient step on the atoms (labels fixed). Returns the updated set
/// and the objective value before the step.
pub fn outer_step(
    xi: &SyntheticSet,
    objective: &Objective,
    outer_lr: f64,
    grad_mode: GradMode,
) -> Result<(SyntheticSet, f64)> {
    let value = objective.value(xi)?;
    let grads = match (grad_mode, objective) {
        (GradMode::Analytic, Objective::DmMmd { target, sigma, class_conditional }) => {
            mmd_grad_atoms(xi, target, *sigma, *class_conditional)?
        }
        (GradMode::Analytic, _) => {
            return Err(crate::error::invalid("analytic outer gradients exist only for dm_mmd"));
        }
        (GradMode::Fd, _) => fd_gradient(xi, objective)?,
    };
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { partial_trace: Vec::new() });
    }
    let atoms = xi
        .atoms()
        .iter()
        .zip(&grads)
        .map(|(a, g)| RealVec::from(a.iter().zip(g).map(|(x, gi)| x - outer_lr * gi).collect::<Vec<_>>()))
        .collect();
    Ok((xi.with_atoms(atoms)?, value))
}
