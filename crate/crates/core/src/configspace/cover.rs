use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Greedy `r`-cover of a configuration family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub radius: f64,
    pub centers: Vec<usize>,
    /// Center index assigned to every configuration.
    pub assignment: Vec<usize>,
    pub n_r: usize,
    pub h_cov: f64,
    pub proxy_log_m: f64,
}

pub fn validate_matrix(dist: &[Vec<f64>]) -> Result<()> {
    let m = dist.len();
    if m == 0 {
        return Err(Error::BadMatrix("empty matrix".into()));
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != m {
            return Err(Error::BadMatrix(format!("row {i} has {} entries, expected {m}", row.len())));
        }
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() || v < 0.0 {
                return Err(Error::BadMatrix(format!("entry ({i},{j}) = {v}")));
            }
            if (v - dist[j][i]).abs() > 1e-9 {
                return Err(Error::BadMatrix(format!("asymmetric at ({i},{j})")));
            }
        }
        if row[i].abs() > 1e-9 {
            return Err(Error::BadMatrix(format!("nonzero diagonal at {i}")));
        }
    }
    Ok(())
}

fn greedy_at(dist: &[Vec<f64>], r: f64) -> (Vec<usize>, Vec<usize>) {
    let m = dist.len();
    let mut assignment = vec![usize::MAX; m];
    let mut centers = Vec::new();
    for i in 0..m {
        if assignment[i] != usize::MAX {
            continue;
        }
        centers.push(i);
        for j in i..m {
            if assignment[j] == usize::MAX && dist[i][j] <= r {
                assignment[j] = i;
            }
        }
    }
    (centers, assignment)
}

/// Greedy `r`-cover. The base pass is lowest-index-first: each uncovered
/// configuration in index order becomes a center and claims every
/// uncovered one within its radius. That pass alone is not monotone in the
/// radius, so it is run at `r` and at every distinct distance below `r`
/// (each such cover is also an `r`-cover) and the smallest is kept, ties
/// going to the largest radius. `n_r` is then non-increasing in `r`.
pub fn greedy_cover(dist: &[Vec<f64>], r: f64) -> Result<CoverReport> {
    validate_matrix(dist)?;
    if !(r >= 0.0) {
        return Err(crate::error::invalid(format!("radius {r}")));
    }
    let m = dist.len();
    let mut radii: Vec<f64> = dist.iter().flatten().copied().filter(|&d| d < r).collect();
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    let mut best = greedy_at(dist, r);
    for rr in radii {
        let cand = greedy_at(dist, rr);
        if cand.0.len() < best.0.len() {
            best = cand;
        }
    }
    let (centers, assignment) = best;
    let n_r = centers.len();
    Ok(CoverReport {
        radius: r,
        centers,
        assignment,
        n_r,
        h_cov: (n_r as f64).ln(),
        proxy_log_m: (m as f64).ln(),
    })
}

/// Nearest-rank `q`-quantile of the off-diagonal upper-triangle entries.
pub fn quantile_radius(dist: &[Vec<f64>], q: f64) -> Result<f64> {
    validate_matrix(dist)?;
    let m = dist.len();
    if m < 2 {
        return Err(Error::BadMatrix("need at least two configurations".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(crate::error::invalid(format!("quantile {q}")));
    }
    let mut v: Vec<f64> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).map(|(i, j)| dist[i][j]).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[rank - 1])
}
