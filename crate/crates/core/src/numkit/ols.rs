use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl LawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Least-squares line through `(xs, ys)`.
///
/// When `ys` has zero variance and the residuals vanish the fit is perfect
/// and `r_squared` is 1. R² is clamped into `[0, 1]` against round-off.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<LawFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimMismatch(format!(
            "{} xs vs {} ys",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    if sxx <= (1e-14 * scale) * (1e-14 * scale) * nf {
        return Err(Error::DegenerateFit("xs are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let yscale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1.0);
    let r_squared = if ss_tot <= 1e-28 * yscale * yscale * nf {
        if ss_res <= 1e-24 * yscale * yscale * nf {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(LawFit {
        slope,
        intercept,
        r_squared,
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let f = ols_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn constant_ys_is_a_perfect_fit() {
        let f = ols_fit(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert!((f.intercept - 5.0).abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn matches_normal_equations() {
        // Normal equations for xs=[0,1,2], ys=[0,1,3]:
        // [3 3; 3 5] [b; a] = [4; 7]  =>  a = 1.5, b = -1/6.
        // fitted = [-1/6, 4/3, 17/6], residuals = [1/6, -1/3, 1/6],
        // SS_res = 1/6, mean y = 4/3, SS_tot = 14/3  =>  R^2 = 1 - 1/28.
        let f = ols_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 3.0]).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.intercept + 1.0 / 6.0).abs() < 1e-12);
        assert!((f.r_squared - 27.0 / 28.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(ols_fit(&[1.0], &[1.0]), Err(Error::DegenerateFit(_))));
        assert!(matches!(
            ols_fit(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(ols_fit(&[1.0, 2.0], &[1.0]), Err(Error::DimMismatch(_))));
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_xs(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40)
        ) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-3));
            let f = ols_fit(&xs, &ys).unwrap();
            let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - f.predict(*x)).collect();
            let d: f64 = res.iter().zip(&xs).map(|(r, x)| r * x).sum();
            let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>()
                * ys.iter().map(|y| y.abs()).sum::<f64>().max(1.0);
            prop_assert!(d.abs() < 1e-9 * scale);
            prop_assert!((0.0..=1.0).contains(&f.r_squared));
        }
    }
}
