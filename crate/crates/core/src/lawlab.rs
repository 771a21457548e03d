//! Scaling-law and coverage-law harnesses and the `K_min` calculator.
//!
//! A gap record compares students trained on a synthetic set against a
//! real-data baseline under the same per-repeat init and batch streams.
//! Repeat `r` uses `rng.fork("repeat-{r}")`; its init comes from
//! `fork("init")` and its schedule from `fork("schedule")`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configspace::{train, Configuration};
use crate::distill::{distill_with, DistillSettings, Method};
use crate::error::{invalid, Error, Result};
use crate::measures::WeightedDataset;
use crate::models::{accuracy, risk};
use crate::numkit::{ols_fit, LawFit, RngStream};
use crate::surrogates::SyntheticSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// `acc_real - mean acc_syn`, signed.
    #[default]
    Accuracy,
    /// `|mean risk_syn - risk_real|` on the test set.
    Risk,
}

impl DeltaMode {
    pub fn label(&self) -> &'static str {
        match self {
            DeltaMode::Accuracy => "accuracy",
            DeltaMode::Risk => "risk",
        }
    }
}

/// One `(k, config)` cell. In risk mode the `acc_*` fields hold test risks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub k: usize,
    pub config_id: String,
    pub mode: DeltaMode,
    pub repeats: usize,
    pub acc_real: f64,
    pub acc_syn_mean: f64,
    pub acc_syn_std: f64,
    pub delta: f64,
}

/// Test metrics of the real-data baseline, averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealBaseline {
    pub config_id: String,
    pub accuracy: f64,
    pub risk: f64,
    pub repeats: usize,
    pub train_steps: usize,
}

fn repeat_metrics(
    cfg: &Configuration,
    train_set: &WeightedDataset,
    test_set: &WeightedDataset,
    steps: usize,
    repeats: usize,
    rng: &RngStream,
) -> Result<Vec<(f64, f64)>> {
    (0..repeats)
        .map(|r| {
            let s = rng.fork(&format!("repeat-{r}"));
            let theta0 = cfg.init_params(&s.fork("init"));
            let traj = train(cfg, train_set, &theta0, steps, &s.fork("schedule"))?;
            let theta = traj.last();
            Ok((accuracy(&cfg.model, theta, test_set)?, risk(&cfg.model, theta, test_set)?))
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_eval_args(steps: usize, repeats: usize) -> Result<()> {
    if steps == 0 || repeats == 0 {
        return Err(invalid("train_steps and repeats must be at least 1"));
    }
    Ok(())
}

/// Trains the real-data baseline for `cfg`.
pub fn real_baseline(
    cfg: &Configuration,
    real: &WeightedDataset,
    test_set: &WeightedDataset,
    steps: usize,
    repeats: usize,
    rng: &RngStream,
) -> Result<RealBaseline> {
    check_eval_args(steps, repeats)?;
    cfg.validate()?;
    let m = repeat_metrics(cfg, real, test_set, steps, repeats, rng)?;
    let acc: Vec<f64> = m.iter().map(|x| x.0).collect();
    let rk: Vec<f64> = m.iter().map(|x| x.1).collect();
    Ok(RealBaseline {
        config_id: cfg.id.clone(),
        accuracy: mean_std(&acc).0,
        risk: mean_std(&rk).0,
        repeats,
        train_steps: steps,
    })
}

/// Gap records in both modes, `[accuracy, risk]`, against a precomputed
/// baseline (which must come from the same `rng`, steps and repeats).
pub fn evaluate_gap_with_baseline(
    synthetic: &SyntheticSet,
    cfg: &Configuration,
    baseline: &RealBaseline,
    test_set: &WeightedDataset,
    rng: &RngStream,
) -> Result<[GapRecord; 2]> {
    if baseline.config_id != cfg.id {
        return Err(invalid(format!("baseline for {} used with {}", baseline.config_id, cfg.id)));
    }
    let m = repeat_metrics(cfg, &synthetic.to_measure(), test_set, baseline.train_steps, baseline.repeats, rng)?;
    let acc: Vec<f64> = m.iter().map(|x| x.0).collect();
    let rk: Vec<f64> = m.iter().map(|x| x.1).collect();
    let (am, asd) = mean_std(&acc);
    let (rm, rsd) = mean_std(&rk);
    let rec = |mode, real: f64, mean: f64, std: f64, delta: f64| GapRecord {
        k: synthetic.k(),
        config_id: cfg.id.clone(),
        mode,
        repeats: baseline.repeats,
        acc_real: real,
        acc_syn_mean: mean,
        acc_syn_std: std,
        delta,
    };
    Ok([
        rec(DeltaMode::Accuracy, baseline.accuracy, am, asd, baseline.accuracy - am),
        rec(DeltaMode::Risk, baseline.risk, rm, rsd, (rm - baseline.risk).abs()),
    ])
}

/// Trains `repeats` students on `synthetic` and on `real` and records the
/// gap in the requested mode.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_gap(
    synthetic: &SyntheticSet,
    cfg: &Configuration,
    real: &WeightedDataset,
    test_set: &WeightedDataset,
    steps: usize,
    repeats: usize,
    rng: &RngStream,
    mode: DeltaMode,
) -> Result<GapRecord> {
    let baseline = real_baseline(cfg, real, test_set, steps, repeats, rng)?;
    let [a, r] = evaluate_gap_with_baseline(synthetic, cfg, &baseline, test_set, rng)?;
    Ok(match mode {
        DeltaMode::Accuracy => a,
        DeltaMode::Risk => r,
    })
}

/// Shared knobs of both harnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub method: Method,
    pub outer_iters: usize,
    pub outer_lr: f64,
    pub train_steps: usize,
    pub repeats: usize,
    pub mode: DeltaMode,
    pub distill: DistillSettings,
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        check_eval_args(self.train_steps, self.repeats)?;
        if self.outer_iters == 0 {
            return Err(invalid("outer_iters must be at least 1"));
        }
        if !(self.outer_lr >= 0.0) || !self.outer_lr.is_finite() {
            return Err(invalid("outer_lr must be finite and non-negative"));
        }
        self.distill.validate()
    }
}

fn check_ipcs(ipcs: &[usize], min_len: usize) -> Result<()> {
    if ipcs.len() < min_len {
        return Err(invalid(format!("need at least {min_len} ipc values, got {}", ipcs.len())));
    }
    if ipcs[0] == 0 || ipcs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("ipcs must be positive and strictly increasing: {ipcs:?}")));
    }
    Ok(())
}

fn distill_all(
    real: &WeightedDataset,
    source: &Configuration,
    ipcs: &[usize],
    s: &ExperimentSettings,
    rng: &RngStream,
) -> Result<Vec<SyntheticSet>> {
    ipcs.par_iter()
        .map(|&ipc| {
            let r = rng.fork(&format!("distill-ipc-{ipc}"));
            Ok(distill_with(real, s.method, source, ipc, s.outer_iters, s.outer_lr, &s.distill, &r)?.result)
        })
        .collect()
}

/// Fit of `delta` against `1/sqrt(k)` for the records in `mode`.
pub fn fit_scaling(records: &[GapRecord], mode: DeltaMode) -> Result<LawFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.mode == mode)
        .map(|r| (1.0 / (r.k as f64).sqrt(), r.delta))
        .unzip();
    ols_fit(&xs, &ys)
}

/// Output of [`scaling_experiment`]: records in both modes, sorted by
/// `(k, mode)`, and the fit in the selected mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub records: Vec<GapRecord>,
    pub baseline: RealBaseline,
    pub fit: LawFit,
}

/// Single-configuration scaling law: one distillation per ipc, one gap
/// record per ipc against a baseline trained once.
pub fn scaling_experiment(
    real: &WeightedDataset,
    test_set: &WeightedDataset,
    ipcs: &[usize],
    cfg: &Configuration,
    settings: &ExperimentSettings,
    rng: &RngStream,
) -> Result<ScalingResult> {
    check_ipcs(ipcs, 3)?;
    settings.validate()?;
    cfg.validate()?;
    let eval_rng = rng.fork("evaluate");
    let baseline = real_baseline(cfg, real, test_set, settings.train_steps, settings.repeats, &eval_rng)?;
    let synthetic = distill_all(real, cfg, ipcs, settings, &rng.fork("distill"))?;
    let per_k: Vec<[GapRecord; 2]> = synthetic
        .par_iter()
        .map(|xi| evaluate_gap_with_baseline(xi, cfg, &baseline, test_set, &eval_rng))
        .collect::<Result<_>>()?;
    let records: Vec<GapRecord> = per_k.into_iter().flatten().collect();
    let fit = fit_scaling(&records, settings.mode)?;
    Ok(ScalingResult { records, baseline, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    #[default]
    Prefix,
    Random,
}

impl SubsetMode {
    pub fn label(&self) -> &'static str {
        match self {
            SubsetMode::Prefix => "prefix",
            SubsetMode::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub m: usize,
    pub k: usize,
    /// `sqrt(ln m) / sqrt(k)`
    pub x: f64,
    /// Mean of the gap over the subset.
    pub y: f64,
    pub subset_mode: SubsetMode,
    pub trial: usize,
}

/// Coverage points for subset sizes `2..=M` from a gap matrix indexed
/// `[k index][config index]`. Prefix mode yields one point per `(m, k)`
/// (trial 0); random mode yields `trials` points, each subset drawn from
/// `rng.fork("subset-m{m}-t{t}")` and shared across `k`.
pub fn coverage_points(
    ks: &[usize],
    deltas: &[Vec<f64>],
    subset_mode: SubsetMode,
    trials: usize,
    rng: &RngStream,
) -> Result<Vec<CoveragePoint>> {
    if deltas.len() != ks.len() {
        return Err(Error::DimMismatch(format!("{} k values vs {} matrix rows", ks.len(), deltas.len())));
    }
    let big_m = deltas.first().map_or(0, Vec::len);
    if big_m < 2 || deltas.iter().any(|row| row.len() != big_m) {
        return Err(invalid("coverage needs a rectangular matrix with at least 2 configurations"));
    }
    let trials = match subset_mode {
        SubsetMode::Prefix => 1,
        SubsetMode::Random if trials == 0 => return Err(invalid("random subsets need at least one trial")),
        SubsetMode::Random => trials,
    };
    let mut out = Vec::new();
    for m in 2..=big_m {
        for t in 0..trials {
            let subset: Vec<usize> = match subset_mode {
                SubsetMode::Prefix => (0..m).collect(),
                SubsetMode::Random => rng.fork(&format!("subset-m{m}-t{t}")).permutation(big_m)[..m].to_vec(),
            };
            for (ki, &k) in ks.iter().enumerate() {
                let y = subset.iter().map(|&a| deltas[ki][a]).sum::<f64>() / m as f64;
                out.push(CoveragePoint {
                    m,
                    k,
                    x: (m as f64).ln().sqrt() / (k as f64).sqrt(),
                    y,
                    subset_mode,
                    trial: t,
                });
            }
        }
    }
    Ok(out)
}

pub fn fit_coverage(points: &[CoveragePoint]) -> Result<LawFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.m >= 2).map(|p| (p.x, p.y)).unzip();
    ols_fit(&xs, &ys)
}

/// Output of [`coverage_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    /// Both modes, sorted by `(k, config_id, mode)`.
    pub records: Vec<GapRecord>,
    pub points: Vec<CoveragePoint>,
    pub fit: LawFit,
    /// `ln M`, the coverage-entropy proxy.
    pub log_m: f64,
}

/// Evaluates `gap(k index, config index)` once per cell over the task
/// grid. Rows follow `configs` order whatever order the tasks finish in.
pub fn record_matrix<F>(n_k: usize, n_configs: usize, gap: F) -> Result<Vec<Vec<[GapRecord; 2]>>>
where
    F: Fn(usize, usize) -> Result<[GapRecord; 2]> + Sync,
{
    let tasks: Vec<(usize, usize)> = (0..n_k).flat_map(|k| (0..n_configs).map(move |a| (k, a))).collect();
    let cells: Vec<[GapRecord; 2]> = tasks.par_iter().map(|&(k, a)| gap(k, a)).collect::<Result<_>>()?;
    let mut cells = cells.into_iter();
    Ok((0..n_k).map(|_| cells.by_ref().take(n_configs).collect()).collect())
}

/// Configuration-coverage law. Synthetic sets are distilled once per ipc
/// under `source` and evaluated under every configuration of the family;
/// each configuration's baseline is trained once.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    real: &WeightedDataset,
    test_set: &WeightedDataset,
    ipcs: &[usize],
    configs: &[Configuration],
    source: &Configuration,
    subset_mode: SubsetMode,
    trials: usize,
    settings: &ExperimentSettings,
    rng: &RngStream,
) -> Result<CoverageResult> {
    check_ipcs(ipcs, 1)?;
    settings.validate()?;
    if configs.len() < 2 {
        return Err(invalid("coverage needs at least 2 configurations"));
    }
    for c in configs.iter().chain([source]) {
        c.validate()?;
    }
    let eval_rng = rng.fork("evaluate");
    let baselines: Vec<RealBaseline> = configs
        .par_iter()
        .map(|c| real_baseline(c, real, test_set, settings.train_steps, settings.repeats, &eval_rng))
        .collect::<Result<_>>()?;
    let synthetic = distill_all(real, source, ipcs, settings, &rng.fork("distill"))?;
    let rows = record_matrix(ipcs.len(), configs.len(), |ki, a| {
        evaluate_gap_with_baseline(&synthetic[ki], &configs[a], &baselines[a], test_set, &eval_rng)
    })?;
    let ks: Vec<usize> = synthetic.iter().map(SyntheticSet::k).collect();
    let mode_idx = match settings.mode {
        DeltaMode::Accuracy => 0,
        DeltaMode::Risk => 1,
    };
    let deltas: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|r| r[mode_idx].delta).collect()).collect();
    let points = coverage_points(&ks, &deltas, subset_mode, trials, &rng.fork("subsets"))?;
    let fit = fit_coverage(&points)?;
    let mut records: Vec<GapRecord> = rows.into_iter().flatten().flatten().collect();
    records.sort_by(|x, y| (x.k, &x.config_id, x.mode.label()).cmp(&(y.k, &y.config_id, y.mode.label())));
    Ok(CoverageResult {
        records,
        points,
        fit,
        log_m: (configs.len() as f64).ln(),
    })
}

/// `ceil(slope^2 * ln M / (eps0 - intercept)^2)` for a coverage fit.
pub fn kmin_estimate(fit: &LawFit, eps0: f64, log_m: f64) -> Result<u64> {
    if !eps0.is_finite() || !(log_m >= 0.0) {
        return Err(invalid("eps0 must be finite and ln M non-negative"));
    }
    if eps0 <= fit.intercept {
        return Err(Error::InfeasibleTarget { eps0, floor: fit.intercept });
    }
    let k = (fit.slope * fit.slope * log_m / (eps0 - fit.intercept).powi(2)).ceil();
    Ok(k as u64)
}
