//! Matching discrepancy and the surrogate-to-discrepancy bridge bounds.
//!
//! For `diag_adaptive` configurations the preconditioner at a probe is the
//! stateless one evaluated at the average of the two measures' mean
//! gradients, which keeps the discrepancy symmetric in its arguments. The
//! same diagonal defines `kappa_hat`, so `kappa_hat` bounds every
//! preconditioner the discrepancy uses.

use serde::{Deserialize, Serialize};

use crate::configspace::{Configuration, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::measures::WeightedDataset;
use crate::models::{estimate_lipschitz_at, mean_grad};
use crate::numkit::{norm2, sub, RealVec, RngStream};
use crate::surrogates::{mmd, sliced_w1, GmContext};

fn gradient_gap(cfg: &Configuration, theta: &[f64], a: &WeightedDataset, b: &WeightedDataset) -> Result<(Vec<f64>, Vec<f64>)> {
    let ga = mean_grad(&cfg.model, theta, a)?;
    let gb = mean_grad(&cfg.model, theta, b)?;
    let mid: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| 0.5 * (x + y)).collect();
    let diag = cfg.preconditioner.stateless_diagonal(&mid);
    Ok((sub(&ga, &gb), diag))
}

/// `max_theta |P(theta) (E_mu g(theta) - E_nu g(theta))|` over the probes.
pub fn matching_discrepancy(
    cfg: &Configuration,
    mu: &WeightedDataset,
    nu: &WeightedDataset,
    theta_probes: &[RealVec],
) -> Result<f64> {
    if theta_probes.is_empty() {
        return Err(invalid("matching discrepancy needs at least one probe"));
    }
    let mut best = 0.0f64;
    for theta in theta_probes {
        let (gap, diag) = gradient_gap(cfg, theta, mu, nu)?;
        let pre: Vec<f64> = gap.iter().zip(&diag).map(|(g, p)| g * p).collect();
        best = best.max(norm2(&pre));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConstants {
    pub kappa_hat: f64,
    pub l_z_hat: f64,
    pub l_theta_hat: f64,
    pub c_k: f64,
    pub omega_min: f64,
    pub eta: f64,
    pub eps_path: f64,
    pub n_anchors: usize,
    /// Factor already applied to `l_z_hat` and `l_theta_hat`.
    pub safety_factor: f64,
}

/// Probe discrepancy next to its distribution, gradient and trajectory
/// bridge bounds. Serialises to one flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub delta_hat: f64,
    pub b_dm_w1: f64,
    pub b_dm_mmd: f64,
    pub b_gm: f64,
    pub b_tm: f64,
    pub sw1: f64,
    pub mmd: f64,
    pub m_gm: f64,
    pub m_tm: f64,
    #[serde(flatten)]
    pub constants: BridgeConstants,
}

/// Knobs of [`bridge_bounds`].
#[derive(Debug, Clone)]
pub struct BridgeParams {
    pub sigma: f64,
    /// Path weights for the trajectory gap, one per trajectory point.
    pub omega: Vec<f64>,
    pub eps_path: f64,
    pub c_k: f64,
    pub safety_factor: f64,
    pub sw1_projections: usize,
    pub lipschitz_samples: usize,
    pub perturb_scale: f64,
}

impl BridgeParams {
    pub fn new(sigma: f64, unroll: usize) -> Self {
        Self {
            sigma,
            omega: vec![1.0; unroll + 1],
            eps_path: 0.0,
            c_k: 1.0,
            safety_factor: 1.5,
            sw1_projections: 32,
            lipschitz_samples: 64,
            perturb_scale: 1e-3,
        }
    }
}

/// Evaluates the probe discrepancy and every bridge bound on one instance.
///
/// `traj_pair` is `(source, target)` trained from a shared init under a
/// shared batch schedule. Lipschitz constants are estimated at the probes
/// and anchors on the union of both measures, then multiplied by
/// `safety_factor`. W1 and MMD are class-conditional.
#[allow(clippy::too_many_arguments)]
pub fn bridge_bounds(
    cfg: &Configuration,
    source: &WeightedDataset,
    target: &WeightedDataset,
    theta_probes: &[RealVec],
    anchors: &[RealVec],
    traj_pair: (&Trajectory, &Trajectory),
    params: &BridgeParams,
    rng: &RngStream,
) -> Result<BridgeReport> {
    if anchors.is_empty() {
        return Err(invalid("bridge bounds need at least one anchor"));
    }
    let (ts, tt) = traj_pair;
    if ts.params.len() != tt.params.len() {
        return Err(Error::DimMismatch("trajectory pair lengths differ".into()));
    }
    if params.omega.len() != ts.params.len() || params.omega.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid(format!(
            "need {} positive path weights, got {}",
            ts.params.len(),
            params.omega.len()
        )));
    }

    let delta_hat = matching_discrepancy(cfg, source, target, theta_probes)?;

    let mut kappa_hat = 0.0f64;
    for theta in theta_probes.iter().chain(anchors) {
        let (_, diag) = gradient_gap(cfg, theta, source, target)?;
        kappa_hat = kappa_hat.max(diag.into_iter().fold(0.0, f64::max));
    }

    let union = {
        let mut pts = source.points().to_vec();
        pts.extend(target.points().iter().cloned());
        let mut w: Vec<f64> = source.weights().iter().map(|w| 0.5 * w).collect();
        w.extend(target.weights().iter().map(|w| 0.5 * w));
        WeightedDataset::new(pts, w, source.num_classes().max(target.num_classes()))?
    };
    let lip_thetas: Vec<RealVec> = theta_probes.iter().chain(anchors).cloned().collect();
    let lip = estimate_lipschitz_at(
        &cfg.model,
        cfg,
        &union,
        &lip_thetas,
        params.lipschitz_samples,
        params.perturb_scale,
        &rng.fork("lipschitz"),
    )?;
    let l_z_hat = params.safety_factor * lip.l_z;
    let l_theta_hat = params.safety_factor * lip.l_theta;

    let sw1 = sliced_w1(source, target, params.sw1_projections, true, &rng.fork("sw1"))?;
    let mmd_value = mmd(source, target, params.sigma, true)?;
    let m_gm = GmContext::new(target, cfg, anchors.to_vec())?.value(source)?;
    let m_tm: f64 = params
        .omega
        .iter()
        .zip(ts.params.iter().zip(&tt.params))
        .map(|(w, (a, b))| w * norm2(&sub(a, b)))
        .sum();
    let omega_min = params.omega.iter().cloned().fold(f64::INFINITY, f64::min);
    let eta = cfg.step_size;

    Ok(BridgeReport {
        delta_hat,
        b_dm_w1: kappa_hat * l_z_hat * sw1,
        b_dm_mmd: kappa_hat * params.c_k * mmd_value,
        b_gm: kappa_hat * anchors.len() as f64 * m_gm,
        b_tm: kappa_hat * (l_theta_hat + 2.0 / eta) / omega_min * m_tm + kappa_hat * l_theta_hat * params.eps_path,
        sw1,
        mmd: mmd_value,
        m_gm,
        m_tm,
        constants: BridgeConstants {
            kappa_hat,
            l_z_hat,
            l_theta_hat,
            c_k: params.c_k,
            omega_min,
            eta,
            eps_path: params.eps_path,
            n_anchors: anchors.len(),
            safety_factor: params.safety_factor,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub holds: bool,
    /// Right-hand side minus left-hand side; negative on violation.
    pub margin: f64,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            holds: margin >= -1e-12 * (1.0 + lhs.abs().max(rhs.abs())),
            margin,
        }
    }
}

/// Outcome of the checkable orderings among the bridge bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    /// `b_gm <= n_anchors * b_dm_w1`
    pub gm_le_anchors_dm_w1: InequalityCheck,
    pub delta_le_dm_w1: InequalityCheck,
    pub delta_le_dm_mmd: InequalityCheck,
    pub delta_le_gm: InequalityCheck,
    /// `delta_hat <= b_tm`; `b_tm` already carries the `eps_path` slack.
    pub delta_le_tm: InequalityCheck,
    /// Recorded only, not asserted: `b_tm / b_gm` (`None` when `b_gm = 0`).
    pub tm_over_gm: Option<f64>,
}

impl ExchangeabilityReport {
    pub fn all_hold(&self) -> bool {
        [
            self.gm_le_anchors_dm_w1,
            self.delta_le_dm_w1,
            self.delta_le_dm_mmd,
            self.delta_le_gm,
            self.delta_le_tm,
        ]
        .iter()
        .all(|c| c.holds)
    }
}

/// Evaluates every ordering; violations are reported, never raised.
pub fn exchangeability_check(report: &BridgeReport) -> ExchangeabilityReport {
    let r = report;
    ExchangeabilityReport {
        gm_le_anchors_dm_w1: InequalityCheck::new(r.b_gm, r.constants.n_anchors as f64 * r.b_dm_w1),
        delta_le_dm_w1: InequalityCheck::new(r.delta_hat, r.b_dm_w1),
        delta_le_dm_mmd: InequalityCheck::new(r.delta_hat, r.b_dm_mmd),
        delta_le_gm: InequalityCheck::new(r.delta_hat, r.b_gm),
        delta_le_tm: InequalityCheck::new(r.delta_hat, r.b_tm),
        tm_over_gm: (r.b_gm > 0.0).then(|| r.b_tm / r.b_gm),
    }
}
