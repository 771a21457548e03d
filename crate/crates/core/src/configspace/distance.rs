use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::WeightedDataset;
use crate::models::ModelSpec;
use crate::numkit::{norm2, sub, RealVec, RngStream};

use super::{step, Configuration, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Max over probes of the raw update-field gap.
    SupRaw,
    /// Mean over probes of the gap between unit-normalised updates.
    #[default]
    MeanNormalized,
}

/// A parameter value paired with the mini-batch its update is taken on.
#[derive(Debug, Clone)]
pub struct Probe {
    pub theta: RealVec,
    pub batch: WeightedDataset,
    /// Stream for augmentation noise; shared by every configuration.
    pub aug_rng: RngStream,
}

/// Distance assigned to configuration pairs whose parameter spaces differ,
/// in normalised mode: the diameter of the unit sphere.
pub const CROSS_MODEL_DISTANCE: f64 = 2.0;

/// Probe set for a model: `n_theta` init draws times `n_batches` fixed
/// mini-batches of `data`. Depends only on `(model, data, rng)` so every
/// configuration of a family sharing the model sees the same probes.
pub fn probe_set(
    model: &ModelSpec,
    data: &WeightedDataset,
    n_theta: usize,
    n_batches: usize,
    batch_size: usize,
    rng: &RngStream,
) -> Result<Vec<Probe>> {
    let rng = rng.fork(&format!("probes-{}", model.label()));
    let mut batch_rng = rng.fork("batches");
    let batches: Vec<WeightedDataset> = (0..n_batches)
        .map(|_| {
            if batch_size >= data.len() {
                Ok(data.clone())
            } else {
                let perm = batch_rng.permutation(data.len());
                let mut ix = perm[..batch_size].to_vec();
                ix.sort_unstable();
                data.subset(&ix)
            }
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n_theta * n_batches);
    for t in 0..n_theta {
        let theta = crate::models::init_params(model, &rng.fork(&format!("theta-{t}")));
        for (b, batch) in batches.iter().enumerate() {
            out.push(Probe {
                theta: theta.clone(),
                batch: batch.clone(),
                aug_rng: rng.fork(&format!("aug-{t}-{b}")),
            });
        }
    }
    Ok(out)
}

/// Update field `(theta - theta') / eta = P(theta) E g` at a probe.
fn update_field(cfg: &Configuration, probe: &Probe) -> Result<Vec<f64>> {
    let mut aug = probe.aug_rng.clone();
    let next = step(cfg, &probe.theta, &probe.batch, &mut OptimizerState::default(), &mut aug)?;
    Ok(probe
        .theta
        .iter()
        .zip(next.iter())
        .map(|(t, n)| (t - n) / cfg.step_size)
        .collect())
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v) + 1e-12;
    v.into_iter().map(|x| x / n).collect()
}

/// Configuration distance between `a` and `b` on a shared probe set.
pub fn config_distance(a: &Configuration, b: &Configuration, probes: &[Probe], mode: DistanceMode) -> Result<f64> {
    if probes.is_empty() {
        return Err(crate::error::invalid("config_distance needs at least one probe"));
    }
    if a.model.param_dim() != b.model.param_dim() || a.model.input_dim != b.model.input_dim {
        return Err(Error::DimMismatch(format!(
            "{} ({} params) vs {} ({} params)",
            a.id,
            a.model.param_dim(),
            b.id,
            b.model.param_dim()
        )));
    }
    let mut acc = 0.0f64;
    for p in probes {
        let ua = update_field(a, p)?;
        let ub = update_field(b, p)?;
        match mode {
            DistanceMode::SupRaw => acc = acc.max(norm2(&sub(&ua, &ub))),
            DistanceMode::MeanNormalized => acc += norm2(&sub(&unit(ua), &unit(ub))),
        }
    }
    Ok(match mode {
        DistanceMode::SupRaw => acc,
        DistanceMode::MeanNormalized => acc / probes.len() as f64,
    })
}

/// Symmetric distance matrix over a family.
///
/// `probes_for` supplies the probe set of a model. Pairs with different
/// parameter spaces get [`CROSS_MODEL_DISTANCE`] in normalised mode and are
/// an error in raw mode. Pairs are evaluated in parallel and written back by
/// index.
pub fn distance_matrix<F>(configs: &[Configuration], probes_for: F, mode: DistanceMode) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&ModelSpec) -> Result<Vec<Probe>> + Sync,
{
    let m = configs.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&configs[i], &configs[j]);
            if a.model != b.model {
                return match mode {
                    DistanceMode::MeanNormalized => Ok(CROSS_MODEL_DISTANCE),
                    DistanceMode::SupRaw => Err(Error::DimMismatch(format!(
                        "{} and {} use different models",
                        a.id, b.id
                    ))),
                };
            }
            let probes = probes_for(&a.model)?;
            config_distance(a, b, &probes, mode)
        })
        .collect();
    let mut d = vec![vec![0.0; m]; m];
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        d[i][j] = v;
        d[j][i] = v;
    }
    Ok(d)
}
