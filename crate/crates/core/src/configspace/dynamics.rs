use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::WeightedDataset;
use crate::numkit::{norm2, sub, RealVec, RngStream};

use super::{train, Configuration};

/// Empirical contraction ratio and preconditioner bound along training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsDiagnostics {
    pub rho_hat: f64,
    pub kappa_hat: f64,
}

/// Trains each initial pair under one shared schedule and reports the
/// geometric-mean one-step gap ratio. Ratios above one are reported as is.
pub fn dynamics_diagnostics(
    cfg: &Configuration,
    data: &WeightedDataset,
    pairs_of_inits: &[(RealVec, RealVec)],
    steps: usize,
    schedule_rng: &RngStream,
) -> Result<DynamicsDiagnostics> {
    if pairs_of_inits.is_empty() || steps == 0 {
        return Err(crate::error::invalid("need at least one init pair and one step"));
    }
    let mut log_sum = 0.0;
    let mut count = 0usize;
    let mut collapsed = false;
    let mut kappa_hat = 0.0f64;
    for (p, (a, b)) in pairs_of_inits.iter().enumerate() {
        if norm2(&sub(a, b)) == 0.0 {
            return Err(Error::ZeroGap { pair: p });
        }
        let sched = schedule_rng.fork(&format!("pair-{p}"));
        let ta = train(cfg, data, a, steps, &sched)?;
        let tb = train(cfg, data, b, steps, &sched)?;
        kappa_hat = kappa_hat.max(ta.max_precond).max(tb.max_precond);
        for t in 0..steps {
            let before = norm2(&sub(&ta.params[t], &tb.params[t]));
            if before == 0.0 {
                break;
            }
            let after = norm2(&sub(&ta.params[t + 1], &tb.params[t + 1]));
            if after == 0.0 {
                collapsed = true;
                break;
            }
            log_sum += (after / before).ln();
            count += 1;
        }
    }
    let rho_hat = if collapsed || count == 0 { 0.0 } else { (log_sum / count as f64).exp() };
    Ok(DynamicsDiagnostics { rho_hat, kappa_hat })
}
