use crate::error::{Error, Result};
use crate::measures::WeightedDataset;
use crate::numkit::{dot, RngStream};

/// Exact 1-D Wasserstein-1 distance `int |F(t) - G(t)| dt` between weighted
/// point sets.
pub fn w1_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    // +w for a, -w for b; sweep the merged support accumulating F - G
    let mut events: Vec<(f64, f64)> = a.iter().map(|&(x, w)| (x, w)).chain(b.iter().map(|&(y, w)| (y, -w))).collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for win in 0..events.len() {
        cdf_gap += events[win].1;
        if let Some(next) = events.get(win + 1) {
            total += cdf_gap.abs() * (next.0 - events[win].0);
        }
    }
    total
}

fn projected(ds: &WeightedDataset, u: &[f64], class: Option<usize>) -> Vec<(f64, f64)> {
    let pts = ds.points().iter().zip(ds.weights()).filter(|(p, _)| class.is_none_or(|c| p.label == c));
    let raw: Vec<(f64, f64)> = pts.map(|(p, w)| (dot(&p.features, u), *w)).collect();
    let mass: f64 = raw.iter().map(|r| r.1).sum();
    raw.into_iter().map(|(x, w)| (x, w / mass)).collect()
}

/// Draws `n` unit directions for slicing.
pub fn sliced_w1_directions(dim: usize, n: usize, rng: &RngStream) -> Vec<Vec<f64>> {
    let mut rng = rng.fork("sliced-w1");
    (0..n).map(|_| rng.unit_vector(dim)).collect()
}

/// Sliced W1 on the given directions. With `class_conditional`, the
/// per-class values are averaged with the target's class masses.
pub(crate) fn sliced_w1_on(
    source: &WeightedDataset,
    target: &WeightedDataset,
    directions: &[Vec<f64>],
    class_conditional: bool,
) -> Result<f64> {
    if source.dim() != target.dim() {
        return Err(Error::DimMismatch(format!("dims {} vs {}", source.dim(), target.dim())));
    }
    if directions.is_empty() {
        return Err(crate::error::invalid("sliced W1 needs at least one projection"));
    }
    let per_direction = |u: &Vec<f64>| -> Result<f64> {
        if !class_conditional {
            return Ok(w1_1d(&projected(source, u, None), &projected(target, u, None)));
        }
        let sm = source.class_mass();
        let tm = target.class_mass();
        let mut acc = 0.0;
        for c in 0..sm.len().max(tm.len()) {
            let (s, t) = (sm.get(c).copied().unwrap_or(0.0), tm.get(c).copied().unwrap_or(0.0));
            match (s > 0.0, t > 0.0) {
                (false, false) => {}
                (true, true) => acc += t * w1_1d(&projected(source, u, Some(c)), &projected(target, u, Some(c))),
                _ => return Err(Error::MissingClass(c)),
            }
        }
        Ok(acc)
    };
    let mut total = 0.0;
    for u in directions {
        total += per_direction(u)?;
    }
    Ok(total / directions.len() as f64)
}

/// Mean exact 1-D W1 over `n_projections` random unit directions.
pub fn sliced_w1(
    source: &WeightedDataset,
    target: &WeightedDataset,
    n_projections: usize,
    class_conditional: bool,
    rng: &RngStream,
) -> Result<f64> {
    if n_projections == 0 {
        return Err(crate::error::invalid("sliced W1 needs at least one projection"));
    }
    let dirs = sliced_w1_directions(source.dim(), n_projections, rng);
    sliced_w1_on(source, target, &dirs, class_conditional)
}
