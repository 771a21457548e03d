//! Command implementations behind the `lawlab` binary.
//!
//! Every command validates the whole run config before computing, computes
//! everything, then writes its files. Nothing in the output depends on the
//! worker count or the clock.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use lawlab_core::configspace::{distance_matrix, greedy_cover, probe_set, quantile_radius, train};
use lawlab_core::discrepancy::{bridge_bounds, exchangeability_check, BridgeParams};
use lawlab_core::distill::distill_with;
use lawlab_core::lawlab::{coverage_experiment, kmin_estimate, scaling_experiment};
use lawlab_core::surrogates::GmContext;
use lawlab_core::{DeltaMode, Error, RngStream};
use rayon::prelude::*;
use serde_json::json;

pub use config::RunConfig;
use output::{num, write, write_json, TraceSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub const SEED_ENV: &str = "DISTILL_LAWLAB_SEED";

/// Command-line overrides of the run config.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub mode: Option<DeltaMode>,
    pub eps0: Option<f64>,
}

/// Replaces the config seed with `DISTILL_LAWLAB_SEED` when set.
pub fn apply_seed_env(cfg: &mut RunConfig) -> Result<(), CliError> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
    }
    Ok(())
}

fn out_dir(cfg: &RunConfig, opts: &Options) -> Result<PathBuf, CliError> {
    opts.out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Validation("no output directory (use --out or out_dir)".into()))
}

fn prepare(cfg: &RunConfig, opts: &Options) -> Result<(PathBuf, RngStream, config::Data), CliError> {
    cfg.validate()?;
    if let Some(e) = opts.eps0 {
        if !e.is_finite() {
            return Err(CliError::Validation("--eps0 must be finite".into()));
        }
    }
    let out = out_dir(cfg, opts)?;
    let root = RngStream::new(cfg.seed);
    let data = cfg.load_data(&root)?;
    Ok((out, root, data))
}

fn create(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))
}

/// Distils one set per ipc. A single ipc writes straight into the output
/// directory, several ipcs write into `ipc-<n>/` subdirectories.
pub fn cmd_distill(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let (out, root, data) = prepare(cfg, opts)?;
    let source = cfg.source_config(data.train.dim(), data.train.num_classes())?;
    let rng = root.fork("distill");
    let runs: Vec<_> = cfg
        .ipcs
        .par_iter()
        .map(|&ipc| {
            distill_with(
                &data.train,
                cfg.method,
                &source,
                ipc,
                cfg.outer_iters,
                cfg.outer_lr,
                &cfg.distill,
                &rng.fork(&format!("ipc-{ipc}")),
            )
        })
        .collect();
    let mut first_err = None;
    for (&ipc, run) in cfg.ipcs.iter().zip(runs) {
        let dir = if cfg.ipcs.len() == 1 { out.clone() } else { out.join(format!("ipc-{ipc}")) };
        match run {
            Ok(run) => {
                create(&dir)?;
                write(&dir.join("synthetic.csv"), &output::synthetic_csv(&run.result))?;
                write(&dir.join("trace.csv"), &output::trace_csv(&run.trace.values))?;
                write_json(
                    &dir.join("synthetic.meta.json"),
                    &json!({
                        "method": run.method,
                        "ipc": ipc,
                        "k": run.result.k(),
                        "outer_iters": run.outer_iters,
                        "outer_lr": run.outer_lr,
                        "seed": cfg.seed,
                        "source_config": run.source_config,
                        "distill_settings": cfg.distill,
                        "trace": TraceSummary::of(&run.trace),
                    }),
                )?;
            }
            Err(Error::NonFiniteGradient { partial_trace }) => {
                create(&dir)?;
                write(&dir.join("trace.csv"), &output::trace_csv(&partial_trace))?;
                first_err.get_or_insert(CliError::Runtime(format!(
                    "non-finite outer gradient at ipc {ipc} after {} values",
                    partial_trace.len()
                )));
            }
            Err(e) => {
                first_err.get_or_insert(e.into());
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// Single-configuration scaling law under the source configuration.
pub fn cmd_scaling(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let (out, root, data) = prepare(cfg, opts)?;
    if cfg.ipcs.len() < 3 {
        return Err(CliError::Validation("scaling needs at least 3 ipc values".into()));
    }
    let source = cfg.source_config(data.train.dim(), data.train.num_classes())?;
    let settings = cfg.experiment_settings(opts.mode);
    let res = scaling_experiment(&data.train, &data.test, &cfg.ipcs, &source, &settings, &root.fork("scaling"))?;
    let other = match settings.mode {
        DeltaMode::Accuracy => DeltaMode::Risk,
        DeltaMode::Risk => DeltaMode::Accuracy,
    };
    let other_fit = lawlab_core::lawlab::fit_scaling(&res.records, other)?;
    let points: Vec<(f64, f64)> = res
        .records
        .iter()
        .filter(|r| r.mode == settings.mode)
        .map(|r| (1.0 / (r.k as f64).sqrt(), r.delta))
        .collect();
    create(&out)?;
    write(&out.join("records.csv"), &output::records_csv(&res.records))?;
    write_json(
        &out.join("fits.json"),
        &json!({
            "experiment": "scaling",
            "x": "1/sqrt(k)",
            "mode": settings.mode,
            "slope": res.fit.slope,
            "intercept": res.fit.intercept,
            "r_squared": res.fit.r_squared,
            "n_points": res.fit.n_points,
            "other_mode": { "mode": other, "fit": other_fit },
            "baseline": res.baseline,
            "config_id": source.id,
            "method": cfg.method,
            "ipcs": cfg.ipcs,
            "seed": cfg.seed,
        }),
    )?;
    write(&out.join("scaling.svg"), &output::scatter_svg(&points, &res.fit, "1/sqrt(k)", "Delta"))?;
    Ok(())
}

/// Coverage law over the family, the greedy cover of the family and, with
/// `--eps0`, the `K_min` estimate.
pub fn cmd_coverage(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let (out, root, data) = prepare(cfg, opts)?;
    let (dim, classes) = (data.train.dim(), data.train.num_classes());
    let source = cfg.source_config(dim, classes)?;
    let family = cfg.family_configs(dim, classes)?;
    if family.len() < 2 {
        return Err(CliError::Validation("coverage needs at least 2 family configurations".into()));
    }
    let settings = cfg.experiment_settings(opts.mode);
    let res = coverage_experiment(
        &data.train,
        &data.test,
        &cfg.ipcs,
        &family,
        &source,
        cfg.subset_mode,
        cfg.trials,
        &settings,
        &root.fork("coverage"),
    )?;

    let cover_rng = root.fork("cover");
    let cs = &cfg.cover;
    let dist = distance_matrix(
        &family,
        |m| probe_set(m, &data.train, cs.n_theta, cs.n_batches, cs.batch_size, &cover_rng),
        cs.distance_mode,
    )?;
    let radius = quantile_radius(&dist, cs.quantile)?;
    let cover = greedy_cover(&dist, radius)?;

    let kmin = opts.eps0.map(|eps0| match kmin_estimate(&res.fit, eps0, res.log_m) {
        Ok(k) => json!({ "eps0": eps0, "log_m": res.log_m, "feasible": true, "k_min": k }),
        Err(Error::InfeasibleTarget { floor, .. }) => {
            json!({ "eps0": eps0, "log_m": res.log_m, "feasible": false, "floor": floor })
        }
        Err(e) => json!({ "eps0": eps0, "error": e.to_string() }),
    });
    let points: Vec<(f64, f64)> = res.points.iter().map(|p| (p.x, p.y)).collect();

    create(&out)?;
    write(&out.join("records.csv"), &output::records_csv(&res.records))?;
    write(&out.join("coverage.csv"), &output::coverage_csv(&res.points))?;
    write_json(
        &out.join("fits.json"),
        &json!({
            "experiment": "coverage",
            "x": "sqrt(ln m)/sqrt(k)",
            "mode": settings.mode,
            "slope": res.fit.slope,
            "intercept": res.fit.intercept,
            "r_squared": res.fit.r_squared,
            "n_points": res.fit.n_points,
            "log_m": res.log_m,
            "m_range": [2, family.len()],
            "excluded": "m = 1 points are not generated (ln 1 = 0)",
            "subset_mode": cfg.subset_mode,
            "trials": if cfg.subset_mode == lawlab_core::SubsetMode::Random { cfg.trials } else { 1 },
            "source_id": source.id,
            "family_ids": family.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
            "kmin": kmin,
            "method": cfg.method,
            "ipcs": cfg.ipcs,
            "seed": cfg.seed,
        }),
    )?;
    write_json(
        &out.join("cover_report.json"),
        &json!({
            "radius": cover.radius,
            "quantile": cs.quantile,
            "n_r": cover.n_r,
            "h_cov": cover.h_cov,
            "proxy_log_m": cover.proxy_log_m,
            "m": family.len(),
            "centers": cover.centers,
            "assignment": cover.assignment,
            "config_ids": family.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
            "distance_mode": cs.distance_mode,
            "distances": dist.iter().map(|row| row.iter().map(|v| num(*v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }),
    )?;
    write(
        &out.join("coverage.svg"),
        &output::scatter_svg(&points, &res.fit, "sqrt(ln m)/sqrt(k)", "Delta"),
    )?;
    Ok(())
}

/// Bridge bounds for one distilled set (first ipc) against the training
/// data. Probes are the anchors, so the gradient bridge applies.
pub fn cmd_bridges(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let (out, root, data) = prepare(cfg, opts)?;
    let source = cfg.source_config(data.train.dim(), data.train.num_classes())?;
    let ipc = cfg.ipcs[0];
    let run = distill_with(
        &data.train,
        cfg.method,
        &source,
        ipc,
        cfg.outer_iters,
        cfg.outer_lr,
        &cfg.distill,
        &root.fork("distill").fork(&format!("ipc-{ipc}")),
    )?;
    let syn = run.result.to_measure();
    let b = &cfg.bridges;
    let rng = root.fork("bridges");
    let anchors = GmContext::sample(&data.train, &source, b.n_anchors, b.anchor_steps, &rng.fork("anchors"))?.anchors;
    let theta0 = source.init_params(&rng.fork("tm-init"));
    let schedule = rng.fork("tm-schedule");
    let ts = train(&source, &syn, &theta0, b.unroll, &schedule)?;
    let tt = train(&source, &data.train, &theta0, b.unroll, &schedule)?;
    let params = BridgeParams {
        sigma: cfg.distill.sigma,
        omega: vec![1.0; b.unroll + 1],
        eps_path: b.eps_path,
        c_k: 1.0,
        safety_factor: b.safety_factor,
        sw1_projections: b.sw1_projections,
        lipschitz_samples: b.lipschitz_samples,
        perturb_scale: 1e-3,
    };
    let report = bridge_bounds(&source, &syn, &data.train, &anchors, &anchors, (&ts, &tt), &params, &rng.fork("bounds"))?;
    let checks = exchangeability_check(&report);
    let mut value = serde_json::to_value(report).map_err(|e| CliError::Runtime(e.to_string()))?;
    let obj = value.as_object_mut().expect("report serialises to an object");
    obj.insert("checks".into(), serde_json::to_value(checks).map_err(|e| CliError::Runtime(e.to_string()))?);
    obj.insert("all_hold".into(), checks.all_hold().into());
    obj.insert("instance".into(), json!({
        "method": cfg.method,
        "ipc": ipc,
        "outer_iters": cfg.outer_iters,
        "probes": "anchors",
        "config_id": source.id,
        "seed": cfg.seed,
    }));
    create(&out)?;
    write_json(&out.join("bridges.json"), &value)?;
    Ok(())
}
