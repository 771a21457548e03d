//! The bi-level distillation engine.
//!
//! Each outer iteration `j` rebuilds the method's inner state (anchors for
//! gradient matching, a shared init and schedule for trajectory matching)
//! from `rng.fork("outer-{j}")` and applies one outer step to the atoms.

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::error::{invalid, Error, Result};
use crate::measures::WeightedDataset;
use crate::numkit::{RealVec, RngStream};
use crate::surrogates::{outer_step, sliced_w1_directions, GmContext, GradMode, Objective, SurrogateTrace, SyntheticSet, TmContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DmMmd,
    DmSw1,
    Gm,
    Tm,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::DmMmd => "dm_mmd",
            Method::DmSw1 => "dm_sw1",
            Method::Gm => "gm",
            Method::Tm => "tm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    RealSubsample,
    Gaussian,
}

/// `ipc` atoms per class drawn from `target`.
///
/// `RealSubsample` picks points without replacement; `Gaussian` samples
/// `N(class mean, diag(class std^2))`.
pub fn init_synthetic(target: &WeightedDataset, ipc: usize, mode: InitMode, rng: &RngStream) -> Result<SyntheticSet> {
    if ipc == 0 {
        return Err(invalid("ipc must be at least 1"));
    }
    let c = target.num_classes();
    let by_class = target.class_indices();
    let mut atoms = Vec::with_capacity(ipc * c);
    let mut labels = Vec::with_capacity(ipc * c);
    for (class, idx) in by_class.iter().enumerate() {
        let mut cr = rng.fork(&format!("init-class-{class}"));
        match mode {
            InitMode::RealSubsample => {
                if idx.len() < ipc {
                    return Err(Error::InsufficientClassPoints { class, needed: ipc, available: idx.len() });
                }
                let perm = cr.permutation(idx.len());
                for &p in &perm[..ipc] {
                    atoms.push(target.points()[idx[p]].features.clone());
                    labels.push(class);
                }
            }
            InitMode::Gaussian => {
                let (mean, std) = target.class_moments(class).ok_or(Error::InsufficientClassPoints {
                    class,
                    needed: 1,
                    available: 0,
                })?;
                for _ in 0..ipc {
                    let a: Vec<f64> = mean.iter().zip(&std).map(|(m, s)| m + s * cr.normal()).collect();
                    atoms.push(RealVec::from(a));
                    labels.push(class);
                }
            }
        }
    }
    SyntheticSet::new(atoms, labels, c)
}

/// Per-method knobs of the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSettings {
    pub init: InitMode,
    pub sigma: f64,
    pub class_conditional: bool,
    pub sw1_projections: usize,
    pub n_anchors: usize,
    pub anchor_steps: usize,
    pub tm_unroll: usize,
    /// Divide each atom's step by its mass `1/k`, so the effective rate does
    /// not shrink as the budget grows.
    pub mass_normalized_lr: bool,
}

impl Default for DistillSettings {
    fn default() -> Self {
        Self {
            init: InitMode::RealSubsample,
            sigma: 1.0,
            class_conditional: true,
            sw1_projections: 32,
            n_anchors: 5,
            anchor_steps: 20,
            tm_unroll: 5,
            mass_normalized_lr: true,
        }
    }
}

impl DistillSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid("sigma must be positive"));
        }
        if self.sw1_projections == 0 || self.n_anchors == 0 || self.tm_unroll == 0 {
            return Err(invalid("projection, anchor and unroll counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRun {
    pub method: Method,
    pub source_config: Configuration,
    pub ipc: usize,
    pub outer_iters: usize,
    pub outer_lr: f64,
    pub result: SyntheticSet,
    pub trace: SurrogateTrace,
}

fn objective<'a>(
    method: Method,
    target: &'a WeightedDataset,
    cfg: &Configuration,
    settings: &DistillSettings,
    rng: &RngStream,
) -> Result<Objective<'a>> {
    Ok(match method {
        Method::DmMmd => Objective::DmMmd {
            target,
            sigma: settings.sigma,
            class_conditional: settings.class_conditional,
        },
        Method::DmSw1 => Objective::DmSw1 {
            target,
            directions: sliced_w1_directions(target.dim(), settings.sw1_projections, rng),
            class_conditional: settings.class_conditional,
        },
        Method::Gm => Objective::Gm(GmContext::sample(target, cfg, settings.n_anchors, settings.anchor_steps, rng)?),
        Method::Tm => Objective::Tm(TmContext::sample(target, cfg, settings.tm_unroll, rng)?),
    })
}

/// Runs `outer_iters` outer steps with default settings.
pub fn distill(
    target: &WeightedDataset,
    method: Method,
    source_config: &Configuration,
    ipc: usize,
    outer_iters: usize,
    outer_lr: f64,
    rng: &RngStream,
) -> Result<DistillRun> {
    distill_with(target, method, source_config, ipc, outer_iters, outer_lr, &DistillSettings::default(), rng)
}

/// Runs the engine. The trace holds the surrogate before each step and once
/// after the last (`outer_iters + 1` values). A non-finite gradient aborts
/// with the trace so far attached to the error.
#[allow(clippy::too_many_arguments)]
pub fn distill_with(
    target: &WeightedDataset,
    method: Method,
    source_config: &Configuration,
    ipc: usize,
    outer_iters: usize,
    outer_lr: f64,
    settings: &DistillSettings,
    rng: &RngStream,
) -> Result<DistillRun> {
    if outer_iters == 0 {
        return Err(invalid("outer_iters must be at least 1"));
    }
    if !(outer_lr >= 0.0) || !outer_lr.is_finite() {
        return Err(invalid(format!("outer_lr must be finite and non-negative, got {outer_lr}")));
    }
    source_config.validate()?;
    settings.validate()?;
    source_config.model.check_dataset(target)?;

    let grad_mode = if method == Method::DmMmd { GradMode::Analytic } else { GradMode::Fd };
    let mut xi = init_synthetic(target, ipc, settings.init, &rng.fork("init"))?;
    let lr = if settings.mass_normalized_lr { outer_lr * xi.k() as f64 } else { outer_lr };
    let mut values = Vec::with_capacity(outer_iters + 1);
    let attach = |e: Error, values: &[f64]| match e {
        Error::NonFiniteGradient { .. } => Error::NonFiniteGradient { partial_trace: values.to_vec() },
        other => other,
    };
    for j in 0..outer_iters {
        let obj = objective(method, target, source_config, settings, &rng.fork(&format!("outer-{j}")))?;
        let (next, value) = outer_step(&xi, &obj, lr, grad_mode).map_err(|e| attach(e, &values))?;
        values.push(value);
        if !value.is_finite() || next.atoms().iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteGradient { partial_trace: values });
        }
        xi = next;
    }
    let last = objective(method, target, source_config, settings, &rng.fork(&format!("outer-{outer_iters}")))?.value(&xi)?;
    values.push(last);
    if !last.is_finite() {
        return Err(Error::NonFiniteGradient { partial_trace: values });
    }
    Ok(DistillRun {
        method,
        source_config: source_config.clone(),
        ipc,
        outer_iters,
        outer_lr,
        result: xi,
        trace: SurrogateTrace::from_values(values),
    })
}
