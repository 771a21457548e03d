//! CSV, JSON and SVG emitters. Output is a pure function of its inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lawlab_core::lawlab::CoveragePoint;
use lawlab_core::{GapRecord, LawFit, SurrogateTrace, SyntheticSet};
use serde::Serialize;

use crate::CliError;

/// 17 significant digits, enough to round-trip.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    write(path, &s)
}

pub fn synthetic_csv(xi: &SyntheticSet) -> String {
    let mut s = String::from("label");
    for j in 0..xi.dim() {
        let _ = write!(s, ",x{j}");
    }
    s.push('\n');
    for (a, l) in xi.atoms().iter().zip(xi.labels()) {
        s.push_str(&l.to_string());
        for v in a.iter() {
            s.push(',');
            s.push_str(&num(*v));
        }
        s.push('\n');
    }
    s
}

pub fn trace_csv(values: &[f64]) -> String {
    let mut s = String::from("iter,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", num(*v));
    }
    s
}

pub fn records_csv(records: &[GapRecord]) -> String {
    let mut s = String::from("k,config_id,repeats,acc_real,acc_syn_mean,acc_syn_std,delta,mode\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.config_id,
            r.repeats,
            num(r.acc_real),
            num(r.acc_syn_mean),
            num(r.acc_syn_std),
            num(r.delta),
            r.mode.label()
        );
    }
    s
}

pub fn coverage_csv(points: &[CoveragePoint]) -> String {
    let mut s = String::from("m,k,x,y,subset_mode,trial\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{},{}", p.m, p.k, num(p.x), num(p.y), p.subset_mode.label(), p.trial);
    }
    s
}

#[derive(Serialize)]
pub struct TraceSummary {
    pub values: usize,
    pub initial: f64,
    pub last: f64,
    pub alpha_hat: Option<f64>,
    pub floor_hat: Option<f64>,
}

impl TraceSummary {
    pub fn of(t: &SurrogateTrace) -> Self {
        Self {
            values: t.values.len(),
            initial: t.initial(),
            last: t.last(),
            alpha_hat: t.alpha_hat,
            floor_hat: t.floor_hat,
        }
    }
}

/// Scatter of `points` with the fitted line over the x range.
pub fn scatter_svg(points: &[(f64, f64)], fit: &LawFit, x_label: &str, y_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (fy0, fy1) = (finite(fit.predict(x0)), finite(fit.predict(x1)));
    y0 = y0.min(fy0).min(fy1);
    y1 = y1.max(fy0).max(fy1);
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#, b = H - PAD);
    for &(x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="steelblue"/>"#, sx(x), sy(y));
    }
    let _ = writeln!(
        s,
        r#"<path d="M {:.3} {:.3} L {:.3} {:.3}" stroke="firebrick" stroke-width="2" fill="none"/>"#,
        sx(x0),
        sy(fy0),
        sx(x1),
        sy(fy1)
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="30" text-anchor="end">slope {:.4} intercept {:.4} R2 {:.3}</text>"#,
        W - PAD,
        fit.slope,
        fit.intercept,
        fit.r_squared
    );
    s.push_str("</svg>\n");
    s
}
