//! Training configurations and the dynamics they induce.

mod cover;
mod distance;
mod dynamics;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{LabeledPoint, WeightedDataset};
use crate::models::{self, ModelSpec};
use crate::numkit::{RealVec, RngStream};

pub use cover::{greedy_cover, quantile_radius, validate_matrix, CoverReport};
pub use distance::{
    config_distance, distance_matrix, probe_set, DistanceMode, Probe, CROSS_MODEL_DISTANCE,
};
pub use dynamics::{dynamics_diagnostics, DynamicsDiagnostics};

/// Preconditioner family `P_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preconditioner {
    Identity,
    Scaled { c: f64 },
    /// Adam-style per-coordinate scaling `1 / (sqrt(v_hat) + eps)` with a
    /// bias-corrected running second moment `v`. The moment lives in
    /// [`OptimizerState`], not here.
    DiagAdaptive { beta: f64, eps: f64 },
}

impl Preconditioner {
    fn validate(&self) -> Result<()> {
        match *self {
            Preconditioner::Identity => Ok(()),
            Preconditioner::Scaled { c } if c > 0.0 && c.is_finite() => Ok(()),
            Preconditioner::Scaled { c } => Err(invalid(format!("scaled preconditioner needs c > 0, got {c}"))),
            Preconditioner::DiagAdaptive { beta, eps } => {
                if !(0.0..1.0).contains(&beta) {
                    return Err(invalid(format!("diag_adaptive beta must be in [0,1), got {beta}")));
                }
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(invalid(format!("diag_adaptive eps must be > 0, got {eps}")));
                }
                Ok(())
            }
        }
    }

    /// Diagonal of `P` for mean gradient `g`, updating `state`.
    fn diagonal(&self, g: &[f64], state: &mut OptimizerState) -> Vec<f64> {
        match *self {
            Preconditioner::Identity => vec![1.0; g.len()],
            Preconditioner::Scaled { c } => vec![c; g.len()],
            Preconditioner::DiagAdaptive { beta, eps } => {
                let v = state.second_moment.get_or_insert_with(|| vec![0.0; g.len()]);
                state.steps += 1;
                let correction = 1.0 - beta.powi(state.steps as i32);
                v.iter_mut()
                    .zip(g)
                    .map(|(vi, gi)| {
                        *vi = beta * *vi + (1.0 - beta) * gi * gi;
                        1.0 / ((*vi / correction).sqrt() + eps)
                    })
                    .collect()
            }
        }
    }

    /// `P(theta) g` with a fresh optimizer state (the first-step
    /// preconditioner for `diag_adaptive`, i.e. `g / (|g| + eps)`).
    pub fn apply_stateless(&self, g: &[f64]) -> Vec<f64> {
        let diag = self.diagonal(g, &mut OptimizerState::default());
        diag.iter().zip(g).map(|(p, gi)| p * gi).collect()
    }

    /// Diagonal of the stateless preconditioner at mean gradient `g`.
    pub fn stateless_diagonal(&self, g: &[f64]) -> Vec<f64> {
        self.diagonal(g, &mut OptimizerState::default())
    }

    /// Largest diagonal entry of the stateless preconditioner at `g`.
    pub fn max_diag_stateless(&self, g: &[f64]) -> f64 {
        self.diagonal(g, &mut OptimizerState::default())
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn label(&self) -> String {
        match *self {
            Preconditioner::Identity => "identity".into(),
            Preconditioner::Scaled { c } => format!("scaled{c}"),
            Preconditioner::DiagAdaptive { .. } => "diag_adaptive".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    None,
    /// Adds `N(0, sigma^2)` to every feature.
    GaussianNoise { sigma: f64 },
    /// Reverses the feature order with probability `prob`.
    CoordFlip { prob: f64 },
}

impl Augmentation {
    fn validate(&self) -> Result<()> {
        match *self {
            Augmentation::None => Ok(()),
            Augmentation::GaussianNoise { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            Augmentation::CoordFlip { prob } if (0.0..=1.0).contains(&prob) => Ok(()),
            other => Err(invalid(format!("bad augmentation {other:?}"))),
        }
    }

    fn apply(&self, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
        match *self {
            Augmentation::None => x.to_vec(),
            Augmentation::GaussianNoise { sigma } => x.iter().map(|v| v + sigma * rng.normal()).collect(),
            Augmentation::CoordFlip { prob } => {
                if rng.uniform() < prob {
                    x.iter().rev().cloned().collect()
                } else {
                    x.to_vec()
                }
            }
        }
    }
}

/// A training configuration `a`: model, preconditioner, step size,
/// augmentation and batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: String,
    pub model: ModelSpec,
    pub preconditioner: Preconditioner,
    pub step_size: f64,
    pub augmentation: Augmentation,
    pub batch_size: usize,
    pub init_seed_label: String,
}

impl Configuration {
    pub fn new(
        id: impl Into<String>,
        model: ModelSpec,
        preconditioner: Preconditioner,
        step_size: f64,
        augmentation: Augmentation,
        batch_size: usize,
    ) -> Result<Self> {
        let cfg = Self {
            id: id.into(),
            model,
            preconditioner,
            step_size,
            augmentation,
            batch_size,
            init_seed_label: "init".into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!("{}: step size must be > 0, got {}", self.id, self.step_size)));
        }
        if self.batch_size == 0 {
            return Err(invalid(format!("{}: batch_size must be >= 1", self.id)));
        }
        self.preconditioner.validate()?;
        self.augmentation.validate()
    }

    /// Initial parameters for the stream `rng`, keyed by `init_seed_label`.
    pub fn init_params(&self, rng: &RngStream) -> RealVec {
        models::init_params(&self.model, &rng.fork(&self.init_seed_label))
    }
}

/// Explicit optimizer state threaded through [`train`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub second_moment: Option<Vec<f64>>,
    pub steps: usize,
}

/// Outcome of one application of the update operator.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub theta: RealVec,
    /// Largest diagonal entry of the preconditioner used.
    pub max_precond: f64,
}

fn augmented(cfg: &Configuration, batch: &WeightedDataset, rng: &mut RngStream) -> Result<WeightedDataset> {
    if cfg.augmentation == Augmentation::None {
        return Ok(batch.clone());
    }
    let pts = batch
        .points()
        .iter()
        .map(|p| LabeledPoint::new(cfg.augmentation.apply(&p.features, rng), p.label))
        .collect();
    WeightedDataset::new(pts, batch.weights().to_vec(), batch.num_classes())
}

/// `theta' = theta - eta * P(theta) (E_batch grad(theta, augment(z)))`.
pub fn step_traced(
    cfg: &Configuration,
    theta: &[f64],
    batch: &WeightedDataset,
    state: &mut OptimizerState,
    aug_rng: &mut RngStream,
) -> Result<StepOutcome> {
    if theta.len() != cfg.model.param_dim() {
        return Err(Error::DimMismatch(format!(
            "theta has {} entries, model expects {}",
            theta.len(),
            cfg.model.param_dim()
        )));
    }
    cfg.model.check_dataset(batch)?;
    let batch = augmented(cfg, batch, aug_rng)?;
    let g = models::mean_grad_unchecked(&cfg.model, theta, &batch);
    let diag = cfg.preconditioner.diagonal(&g, state);
    let max_precond = diag.iter().cloned().fold(0.0, f64::max);
    let next: Vec<f64> = theta
        .iter()
        .zip(diag.iter().zip(&g))
        .map(|(t, (p, gi))| t - cfg.step_size * p * gi)
        .collect();
    Ok(StepOutcome {
        theta: next.into(),
        max_precond,
    })
}

/// One update step; see [`step_traced`].
pub fn step(
    cfg: &Configuration,
    theta: &[f64],
    batch: &WeightedDataset,
    state: &mut OptimizerState,
    aug_rng: &mut RngStream,
) -> Result<RealVec> {
    step_traced(cfg, theta, batch, state, aug_rng).map(|o| o.theta)
}

/// Parameter path `theta_0..theta_T` under a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: Vec<RealVec>,
    pub config_id: String,
    pub batch_schedule_seed: u64,
    pub batch_schedule_path: Vec<String>,
    /// Largest preconditioner diagonal entry seen along the path.
    pub max_precond: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.params.len() - 1
    }

    pub fn last(&self) -> &RealVec {
        self.params.last().expect("trajectory holds theta_0")
    }
}

/// Index batches for `steps` updates over `n` points: without replacement
/// within an epoch, the final batch of an epoch may be short. Full batch when
/// `batch_size >= n`, in which case `rng` is not consumed.
fn batch_schedule(n: usize, batch_size: usize, steps: usize, rng: &mut RngStream) -> Vec<Option<Vec<usize>>> {
    if batch_size >= n {
        return vec![None; steps];
    }
    let mut out = Vec::with_capacity(steps);
    while out.len() < steps {
        let perm = rng.permutation(n);
        for chunk in perm.chunks(batch_size) {
            if out.len() == steps {
                break;
            }
            out.push(Some(chunk.to_vec()));
        }
    }
    out
}

/// `steps` applications of the update operator from `theta0`.
///
/// Mini-batches and augmentation noise come from `schedule_rng` alone, so
/// two datasets trained with clones of the same stream share their schedule.
pub fn train(
    cfg: &Configuration,
    data: &WeightedDataset,
    theta0: &RealVec,
    steps: usize,
    schedule_rng: &RngStream,
) -> Result<Trajectory> {
    let mut batch_rng = schedule_rng.fork("batches");
    let mut aug_rng = schedule_rng.fork("augment");
    let schedule = batch_schedule(data.len(), cfg.batch_size, steps, &mut batch_rng);
    let mut state = OptimizerState::default();
    let mut params = Vec::with_capacity(steps + 1);
    params.push(theta0.clone());
    let mut max_precond = 0.0f64;
    for idx in schedule {
        let batch = match idx {
            None => std::borrow::Cow::Borrowed(data),
            Some(ix) => std::borrow::Cow::Owned(data.subset(&ix)?),
        };
        let out = step_traced(cfg, params.last().unwrap(), &batch, &mut state, &mut aug_rng)?;
        max_precond = max_precond.max(out.max_precond);
        params.push(out.theta);
    }
    Ok(Trajectory {
        params,
        config_id: cfg.id.clone(),
        batch_schedule_seed: schedule_rng.seed(),
        batch_schedule_path: schedule_rng.path().to_vec(),
        max_precond,
    })
}
